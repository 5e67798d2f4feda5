//! Data-efficiency sweep: one fresh encoder per training-set size, scored on
//! a fixed holdout and a synthetic conflict suite.

use std::io::Write;

use serde::Serialize;

use crate::encoder::{evaluate_separation, train, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, AnswerSource};
use crate::model::{ContrastiveSample, ConflictItem};

pub const CSV_HEADER: &str = "size,margin_fraction,mean_margin,crr";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub size: usize,
    /// Holdout share with sim(anchor, pos) above every negative.
    pub margin_fraction: f64,
    pub mean_margin: f64,
    /// Encoder-ranked CRR on the conflict suite, percent.
    pub crr: f64,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!("{},{:.6},{:.6},{:.2}", self.size, self.margin_fraction, self.mean_margin, self.crr)
    }
}

/// Rows completed before any failure, and the failure with its size.
#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failed: Option<(usize, Error)>,
}

/// Checks the size list against a corpus of `available` training samples.
pub fn check_sizes(sizes: &[usize], available: usize) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::Validation("sweep needs at least one size".into()));
    }
    if let Some(&z) = sizes.iter().find(|&&s| s == 0) {
        return Err(Error::Validation(format!("sweep size {z} rejected: TrainConfig needs at least one sample")));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(format!("sweep sizes must be strictly ascending, got {sizes:?}")));
    }
    let largest = *sizes.last().unwrap();
    if largest > available {
        return Err(Error::Validation(format!(
            "sweep size {largest} exceeds the {available} training samples available"
        )));
    }
    Ok(())
}

/// Splits `corpus` into a training pool and the trailing `holdout` samples.
pub fn split_holdout(corpus: &[ContrastiveSample], holdout: usize) -> Result<(&[ContrastiveSample], &[ContrastiveSample])> {
    if holdout == 0 || holdout >= corpus.len() {
        return Err(Error::Validation(format!(
            "holdout of {holdout} leaves no training or no evaluation samples in a corpus of {}",
            corpus.len()
        )));
    }
    Ok(corpus.split_at(corpus.len() - holdout))
}

pub fn sweep_one(
    pool: &[ContrastiveSample],
    holdout: &[ContrastiveSample],
    conflicts: &[ConflictItem],
    size: usize,
    cfg: &TrainConfig,
) -> Result<SweepRow> {
    let trained = train(&pool[..size], cfg)?;
    let sep = evaluate_separation(&trained.params, holdout, &cfg.loss)?;
    let source = AnswerSource::Encoder {
        params: Box::new(trained.params),
        loss: cfg.loss,
    };
    let crr = evaluate(conflicts, &source, &format!("sweep-{size}"))?.report.crr;
    Ok(SweepRow {
        size,
        margin_fraction: sep.positive_margin_fraction,
        mean_margin: sep.mean_margin,
        crr,
    })
}

/// Trains on each prefix size in turn. Each finished row goes to `sink` at
/// once, so a later failure leaves earlier rows in place.
pub fn run_sweep(
    pool: &[ContrastiveSample],
    holdout: &[ContrastiveSample],
    conflicts: &[ConflictItem],
    sizes: &[usize],
    cfg: &TrainConfig,
    mut sink: impl FnMut(&SweepRow) -> Result<()>,
) -> Result<SweepOutcome> {
    check_sizes(sizes, pool.len())?;
    cfg.validate()?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        log::info!("sweep: training on {size} samples");
        match sweep_one(pool, holdout, conflicts, size, cfg).and_then(|row| sink(&row).map(|_| row)) {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::error!("sweep aborted at size {size}: {e}");
                return Ok(SweepOutcome {
                    rows,
                    failed: Some((size, e)),
                });
            }
        }
    }
    Ok(SweepOutcome { rows, failed: None })
}

/// A sink that appends CSV lines to `w`, header first.
pub fn csv_sink<W: Write>(mut w: W) -> Result<impl FnMut(&SweepRow) -> Result<()>> {
    writeln!(w, "{CSV_HEADER}").map_err(|e| Error::io("sweep csv", e))?;
    w.flush().map_err(|e| Error::io("sweep csv", e))?;
    Ok(move |row: &SweepRow| {
        writeln!(w, "{}", row.csv_line()).map_err(|e| Error::io("sweep csv", e))?;
        w.flush().map_err(|e| Error::io("sweep csv", e))
    })
}
