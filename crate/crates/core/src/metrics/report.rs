use std::path::Path;

use super::RoundMetrics;
use crate::{Error, Result};

pub const METRICS_HEADER: [&str; 4] = ["round", "agg_acc", "mean_per_acc", "n_selected"];
pub const CLIENTS_HEADER: [&str; 5] = ["round", "client", "acc_before", "acc_after", "acc_hpm"];
pub const PROXIES_HEADER: [&str; 6] = ["round", "client", "class", "norm", "grad_norm", "set"];
pub const DISTANCES_HEADER: [&str; 5] = ["round", "client", "oo", "om", "mm"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<()> {
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serialize(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per round: `round,agg_acc,mean_per_acc,n_selected`.
pub fn write_metrics_csv(path: impl AsRef<Path>, rounds: &[RoundMetrics]) -> Result<()> {
    write_rows(
        path.as_ref(),
        METRICS_HEADER,
        rounds.iter().map(|r| {
            [
                r.round.to_string(),
                r.agg_acc.to_string(),
                r.mean_per_acc.to_string(),
                r.n_selected().to_string(),
            ]
        }),
    )
}

/// One row per selected client per round; `acc_hpm` is empty when absent.
pub fn write_clients_csv(path: impl AsRef<Path>, rounds: &[RoundMetrics]) -> Result<()> {
    write_rows(
        path.as_ref(),
        CLIENTS_HEADER,
        rounds.iter().flat_map(|r| {
            r.clients.iter().map(move |c| {
                [
                    r.round.to_string(),
                    c.client.to_string(),
                    c.acc_before.to_string(),
                    c.acc_after.to_string(),
                    opt(c.acc_hpm),
                ]
            })
        }),
    )
}

/// One row per class per selected client per round, `set` being `O` or `M`.
pub fn write_proxies_csv(path: impl AsRef<Path>, rounds: &[RoundMetrics]) -> Result<()> {
    write_rows(
        path.as_ref(),
        PROXIES_HEADER,
        rounds.iter().flat_map(|r| {
            r.clients.iter().flat_map(move |c| {
                c.diagnostics.iter().flat_map(move |d| {
                    (0..d.norms.len()).map(move |class| {
                        [
                            r.round.to_string(),
                            c.client.to_string(),
                            class.to_string(),
                            d.norms[class].to_string(),
                            d.grad_norms[class].to_string(),
                            if d.observed[class] { "O" } else { "M" }.to_string(),
                        ]
                    })
                })
            })
        }),
    )
}

/// One row per selected client per round; absent distances are empty.
pub fn write_distances_csv(path: impl AsRef<Path>, rounds: &[RoundMetrics]) -> Result<()> {
    write_rows(
        path.as_ref(),
        DISTANCES_HEADER,
        rounds.iter().flat_map(|r| {
            r.clients.iter().filter_map(move |c| {
                c.diagnostics.as_ref().map(|d| {
                    [
                        r.round.to_string(),
                        c.client.to_string(),
                        opt(d.oo),
                        opt(d.om),
                        opt(d.mm),
                    ]
                })
            })
        }),
    )
}
