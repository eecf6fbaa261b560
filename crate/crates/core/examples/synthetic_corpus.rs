//! Writes a synthetic aligned corpus as TSV.
//!
//! ```text
//! cargo run --release -p cr5 --example synthetic_corpus -- corpus.tsv [bilingual|transitive] [concepts] [seed]
//! ```

use std::io::BufWriter;

use cr5::corpus::write_corpus;
use cr5::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args
        .first()
        .ok_or("usage: synthetic_corpus OUT [bilingual|transitive] [concepts] [seed]")?;
    let kind = args.get(1).map_or("bilingual", String::as_str);
    let n: usize = args.get(2).map_or(Ok(1200), |s| s.parse())?;
    let seed: u64 = args.get(3).map_or(Ok(1), |s| s.parse())?;
    let cfg = match kind {
        "bilingual" => SyntheticConfig::bilingual(n, seed),
        "transitive" => SyntheticConfig::transitive(n, n / 5, seed),
        other => return Err(format!("unknown corpus kind `{other}`").into()),
    };
    let corpus = generate(&cfg)?;
    write_corpus(BufWriter::new(std::fs::File::create(out)?), &corpus.docs)?;
    eprintln!("wrote {} documents to {out}", corpus.docs.len());
    Ok(())
}
