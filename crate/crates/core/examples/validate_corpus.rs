//! Validates an annotated corpus and prints the report.
//!
//! cargo run --example validate_corpus -- [corpus_dir]

use apebehave::annotation::validate_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args().nth(1).unwrap_or_else(|| "synthetic_corpus".into());
    let report = validate_corpus(&root)?;
    print!("{}", report.to_text());
    if !report.is_clean() {
        std::process::exit(1);
    }
    Ok(())
}
