//! Write a seeded synthetic `ratings.txt` / `trust.txt` pair, in the input
//! format the CLI reads, to the directory given as the first argument.

use std::path::Path;

use gdsrec::synthetic::{generate, write_files, SyntheticSpec};

pub fn run_example(dir: &Path, spec: &SyntheticSpec) -> gdsrec::Result<(usize, usize)> {
    let synth = generate(spec)?;
    let (ratings, trust) = write_files(&synth.raw, dir)?;
    println!("{} ratings -> {}", synth.raw.ratings.len(), ratings.display());
    println!("{} trust links -> {}", synth.raw.trust.len(), trust.display());
    Ok((synth.raw.ratings.len(), synth.raw.trust.len()))
}

fn main() -> gdsrec::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data".into());
    run_example(Path::new(&dir), &SyntheticSpec::default()).map(|_| ())
}
