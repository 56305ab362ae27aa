use crate::nn::Matrix;
use crate::{Error, Result};

use super::softmax::{log_sum_exp, softmax_row};

fn check(student: &Matrix, teacher: &Matrix, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", tau, "temperature must be > 0"));
    }
    if !student.same_shape(teacher) {
        return Err(Error::dim(
            "teacher logits",
            student.as_slice().len(),
            teacher.as_slice().len(),
        ));
    }
    if student.rows() == 0 {
        return Err(Error::Empty("distillation batch".into()));
    }
    Ok(())
}

/// `KL(softmax(t/τ) ‖ softmax(s/τ))` for a single row.
fn row_kl(student: &[f64], teacher: &[f64], tau: f64) -> f64 {
    let s: Vec<f64> = student.iter().map(|z| z / tau).collect();
    let t: Vec<f64> = teacher.iter().map(|z| z / tau).collect();
    let lse_s = log_sum_exp(&s);
    let lse_t = log_sum_exp(&t);
    let mut kl = 0.0;
    for (&ts, &ss) in t.iter().zip(&s) {
        let log_q = ts - lse_t;
        let q = log_q.exp();
        if q > 0.0 {
            kl += q * (log_q - (ss - lse_s));
        }
    }
    // rounding can leave a tiny negative for identical rows
    kl.max(0.0)
}

/// Temperature-softened distillation loss
/// `τ² · mean_i KL(softmax(teacher_i/τ) ‖ softmax(student_i/τ))`.
pub fn kd_loss(student: &Matrix, teacher: &Matrix, tau: f64) -> Result<f64> {
    check(student, teacher, tau)?;
    let total: f64 = (0..student.rows())
        .map(|i| row_kl(student.row(i), teacher.row(i), tau))
        .sum();
    Ok(tau * tau * total / student.rows() as f64)
}

/// [`kd_loss`] and its gradient with respect to the student logits,
/// `τ (p − q) / B`.
pub(crate) fn kd_loss_with_grad(
    student: &Matrix,
    teacher: &Matrix,
    tau: f64,
) -> Result<(f64, Matrix)> {
    let loss = kd_loss(student, teacher, tau)?;
    let b = student.rows() as f64;
    let c = student.cols();
    let mut grad = Matrix::zeros(student.rows(), c);
    let mut p = vec![0.0; c];
    let mut q = vec![0.0; c];
    for i in 0..student.rows() {
        let s: Vec<f64> = student.row(i).iter().map(|z| z / tau).collect();
        let t: Vec<f64> = teacher.row(i).iter().map(|z| z / tau).collect();
        softmax_row(&s, &mut p);
        softmax_row(&t, &mut q);
        for (g, (pp, qq)) in grad.row_mut(i).iter_mut().zip(p.iter().zip(&q)) {
            *g = tau * (pp - qq) / b;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_logits_give_zero() {
        let z = Matrix::from_rows(&[[0.3, -1.0, 2.0], [4.0, 4.0, 0.5]]).unwrap();
        assert_eq!(kd_loss(&z, &z, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn reference_value_at_unit_temperature() {
        // KL((½,½) ‖ (0.8,0.2)) = ln(5/4), from mpmath
        let teacher = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let ln2 = 2f64.ln();
        let student = Matrix::from_rows(&[[ln2, -ln2]]).unwrap();
        let v = kd_loss(&student, &teacher, 1.0).unwrap();
        assert!((v - 0.223_143_551_314_209_76).abs() < 1e-14);
    }

    #[test]
    fn non_positive_temperature_rejected() {
        let z = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(kd_loss(&z, &z, 0.0).is_err());
        assert!(kd_loss(&z, &z, -1.0).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0, 2.0]]).unwrap();
        assert!(kd_loss(&a, &b, 1.0).is_err());
    }
}
