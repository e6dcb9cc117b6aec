use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One line of a training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// `epoch,train_loss,val_loss,lr` CSV with one row per record.
pub fn format_training_log(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for r in records {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_row_per_epoch() {
        let recs: Vec<EpochRecord> = (1..=3)
            .map(|e| EpochRecord {
                epoch: e,
                train_loss: 1.0 / e as f64,
                val_loss: 2.0,
                lr: 1e-3,
            })
            .collect();
        let text = format_training_log(&recs);
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().nth(1).unwrap(), "1,1,2,0.001");
    }
}
