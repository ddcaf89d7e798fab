//! Writes the toy graph as ICEWS-style TSV files, parses them back and
//! stores the encoded container.

use std::fs;

use tkgc::data::{load_dataset, load_raw, save_dataset, DatasetStats};
use tkgc::synthetic::{to_icews_tsv, SyntheticSpec};
use tkgc::{build_dataset, BuildOptions, DatasetFormat};

fn main() -> tkgc::Result<()> {
    let dir = std::env::temp_dir().join("tkgc-example-ingest");
    fs::create_dir_all(&dir)?;
    let (train, valid, test) = SyntheticSpec::default().raw();
    let mut paths = Vec::new();
    for (name, facts) in [("train", &train), ("valid", &valid), ("test", &test)] {
        let path = dir.join(format!("{name}.tsv"));
        fs::write(&path, to_icews_tsv(facts))?;
        paths.push(path);
    }

    let read = |i: usize| load_raw(&paths[i], DatasetFormat::Icews);
    let splits = build_dataset(&read(0)?, &read(1)?, &read(2)?, BuildOptions::default())?;
    let container = dir.join("toy.tkg");
    save_dataset(&splits, &container)?;

    let (reloaded, hash) = load_dataset(&container)?;
    assert_eq!(reloaded.train, splits.train);
    println!("{}", DatasetStats::of(&reloaded));
    println!("sha256 {hash}");
    println!("written to {}", container.display());
    Ok(())
}
