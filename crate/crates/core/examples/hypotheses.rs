//! Writing null hypotheses in the filter grammar.
//!
//! ```bash
//! cargo run --example hypotheses
//! ```

use defiers::hypothesis::{parse_expr, HypothesisSet};
use defiers::lattice::{SampleSize, TypeConfiguration};

fn main() -> defiers::Result<()> {
    let s = SampleSize::new(100)?;
    for text in [
        "killed == 0",
        "saved / killed >= 5",
        "killed == 0 and saved >= 1",
        "fisher_null",
        "neyman_null",
        "(compliers >= 10 or always > 90) and never <= 1/2",
    ] {
        let h = HypothesisSet::parse(text, s)?;
        let canonical = parse_expr(text)?;
        println!("{text:<48} {:>7} members   canonical: {canonical}", h.len());
    }

    let h = HypothesisSet::parse("saved / killed >= 5", s)?;
    let theta = TypeConfiguration::new(50, 0, 50, 0);
    println!("saved/killed at {theta} is +inf, so it is a member: {}", h.contains(&theta));

    match HypothesisSet::parse("killed === 0", s) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    match HypothesisSet::parse("killed > 100", s) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
