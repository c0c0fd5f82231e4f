//! Regenerates `data/synthetic_observations.csv` from the known parameters.
//!
//! cargo run --release -p emproj --example make_synthetic [seed] [path]

use std::io::Write;

fn main() -> emproj::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(emproj::synthetic::BUNDLED_SEED);
    let path = args.next().unwrap_or_else(|| {
        concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/data/synthetic_observations.csv"
        )
        .into()
    });
    let obs = emproj::synthetic::default_observations(seed)?;
    let mut buf = Vec::new();
    for line in &obs.provenance {
        writeln!(buf, "# {line}")?;
    }
    writeln!(
        buf,
        "# population in billions, gwp in trillion 2011 dollars, emissions in GtC per year"
    )?;
    obs.write_csv(&mut buf)?;
    std::fs::write(&path, buf)?;
    eprintln!("wrote {} records to {path}", obs.len());
    Ok(())
}
