use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// Token error counts of one alignment, or summed over a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
    pub wer: f64,
}

impl WerBreakdown {
    pub fn edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Corpus-level totals: error counts and reference lengths are summed
    /// before dividing.
    pub fn total<'a>(items: impl IntoIterator<Item = &'a WerBreakdown>) -> WerBreakdown {
        let mut t = WerBreakdown::default();
        for b in items {
            t.substitutions += b.substitutions;
            t.insertions += b.insertions;
            t.deletions += b.deletions;
            t.reference_length += b.reference_length;
        }
        if t.reference_length > 0 {
            t.wer = t.edits() as f64 / t.reference_length as f64;
        }
        t
    }
}

/// Unit-cost Levenshtein alignment. Among minimum-cost alignments the
/// backtrace prefers substitution (or match), then deletion, then insertion.
pub fn wer(reference: &[TokenId], hypothesis: &[TokenId]) -> Result<WerBreakdown> {
    if reference.is_empty() {
        return Err(Error::Contract("empty reference".into()));
    }
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let (mut s, mut del, mut ins) = (0, 0, 0);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diff = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if d[(i - 1) * w + j - 1] + diff == here {
                s += diff;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            del += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    Ok(WerBreakdown {
        substitutions: s,
        insertions: ins,
        deletions: del,
        reference_length: n,
        wer: d[n * w + m] as f64 / n as f64,
    })
}

/// Real-time factor as a ratio of totals.
pub fn rtf(total_elapsed_s: f64, total_duration_s: f64) -> Result<f64> {
    if !(total_duration_s > 0.0) || !(total_elapsed_s >= 0.0) {
        return Err(Error::Contract(format!(
            "rtf needs positive duration and non-negative time, got {total_elapsed_s} / {total_duration_s}"
        )));
    }
    Ok(total_elapsed_s / total_duration_s)
}
