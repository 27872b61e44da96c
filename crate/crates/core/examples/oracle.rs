//! Checking the closed-form likelihood against enumeration of every
//! treatment assignment.
//!
//! ```bash
//! cargo run --release --example oracle
//! ```

use defiers::lattice::{enumerate_data_configs, enumerate_type_configs, RandomizationSpec, SampleSize};
use defiers::likelihood::Engine;
use defiers::oracle::exhaustive_distribution;

fn main() -> defiers::Result<()> {
    let s = SampleSize::new(6)?;
    for spec in [RandomizationSpec::iid(1, 4)?, RandomizationSpec::iid(2, 3)?, RandomizationSpec::urn(2)] {
        let engine = Engine::new(s, spec)?;
        let mut checked = 0;
        for theta in enumerate_type_configs(s) {
            let dist = exhaustive_distribution(&theta, &spec)?;
            for g in enumerate_data_configs(s) {
                let formula = engine.likelihood_exact(&theta, &g)?.exact_value.unwrap_or_default();
                assert_eq!(formula, dist.get(&g).cloned().unwrap_or_default(), "{theta} {g}");
                checked += 1;
            }
        }
        println!("{spec}: {checked} (theta, g) pairs agree exactly");
    }
    Ok(())
}
