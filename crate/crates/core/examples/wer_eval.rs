//! Token error rate with its alignment counts, and corpus-level scoring as
//! a ratio of sums.

use mdasr::harness::{rtf, wer, WerBreakdown};

pub fn run() -> mdasr::Result<()> {
    let pairs: [(&[u32], &[u32]); 4] = [
        (&[4, 5, 6, 7], &[4, 5, 6, 7]),
        (&[4, 5, 6, 7], &[4, 9, 6, 7]),
        (&[4, 5, 6, 7], &[4, 6, 7, 8, 8]),
        (&[4, 5, 6], &[]),
    ];
    let mut all = Vec::new();
    for (r, h) in pairs {
        let b = wer(r, h)?;
        println!("ref {r:?} hyp {h:?}: S={} I={} D={} WER {:.3}", b.substitutions, b.insertions, b.deletions, b.wer);
        all.push(b);
    }
    let total = WerBreakdown::total(&all);
    println!("corpus: {} edits over {} tokens, WER {:.3}", total.edits(), total.reference_length, total.wer);
    println!("0.5 s of compute for 2 s of audio: RTF {:.2}", rtf(0.5, 2.0)?);
    assert!(wer(&[], &[4]).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> mdasr::Result<()> {
    run()
}
