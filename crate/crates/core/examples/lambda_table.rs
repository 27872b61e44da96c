//! Building, caching and reloading the maximum-likelihood table.
//!
//! ```bash
//! cargo run --release --example lambda_table
//! ```

use defiers::cache::{load_or_build, read_table};
use defiers::lattice::{DataConfiguration, RandomizationSpec, SampleSize};
use defiers::likelihood::{Engine, Mode};

fn main() -> defiers::Result<()> {
    let s = SampleSize::new(30)?;
    let engine = Engine::new(s, RandomizationSpec::iid(1, 2)?)?;
    let dir = std::env::temp_dir().join("defiers-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("s30-iid-half.rxlt");
    let _ = std::fs::remove_file(&path);

    let (table, status) = load_or_build(Some(&path), &engine, Mode::Exact, Some(1), false)?;
    println!("{status:?}: {} entries, {} with several maximizers", table.len(), table.multi_valued_count());

    let (_, status) = load_or_build(Some(&path), &engine, Mode::Exact, Some(2), false)?;
    println!("second call: {status:?}");
    assert_eq!(read_table(&path)?, table);

    let g = DataConfiguration::new(10, 5, 5, 10);
    let argmax: Vec<String> = table
        .argmax(g.rank())
        .iter()
        .map(|&r| defiers::lattice::TypeConfiguration::from_rank(s, r as usize).to_string())
        .collect();
    println!("max log-likelihood for {g}: {:.4}, attained at {}", table.log_max()[g.rank()], argmax.join(" "));

    let other = Engine::new(s, RandomizationSpec::urn(15))?;
    match load_or_build(Some(&path), &other, Mode::Exact, None, false) {
        Err(e) => println!("refused: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
