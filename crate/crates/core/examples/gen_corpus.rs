//! Generates the synthetic corpus, writes it to disk and reports how hard
//! each split is for a nearest-prototype frame classifier.

use std::path::Path;

use mdasr::toytask::{gen_corpus, Corpus, CorpusConfig, Split};

fn frame_error(corpus: &Corpus, split: Split) -> f64 {
    let vocab = corpus.config.vocab();
    let fpt = corpus.config.frames_per_token;
    let (mut wrong, mut total) = (0, 0);
    for u in corpus.split(split) {
        for (f, row) in u.frames.outer_iter().enumerate() {
            let truth = vocab.content_index(u.reference[f / fpt]).unwrap();
            wrong += usize::from(corpus.source.nearest_prototype(row.mapv(f64::from).view()) != truth);
            total += 1;
        }
    }
    wrong as f64 / total as f64
}

pub fn run(dir: &Path, train: usize) -> mdasr::Result<()> {
    let cfg = CorpusConfig { train, dev: 20, test_clean: 50, test_other: 50, ..CorpusConfig::default() };
    let corpus = gen_corpus(&cfg);
    corpus.write(dir)?;
    let reloaded = Corpus::load(dir, &Split::ALL)?;
    assert_eq!(reloaded, corpus);
    println!(
        "wrote {} utterances to {}",
        Split::ALL.iter().map(|&s| corpus.split(s).len()).sum::<usize>(),
        dir.display()
    );
    for split in Split::ALL {
        println!("{:<10} frame error {:.3}", split.name(), frame_error(&corpus, split));
    }
    let u = &corpus.split(Split::TestOther)[0];
    println!("{}: {} frames, {:.3} s, reference {:?}", u.id, u.frames.nrows(), u.duration_s, u.reference);
    Ok(())
}

#[allow(dead_code)]
fn main() -> mdasr::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "corpus".into());
    run(Path::new(&dir), 1000)
}
