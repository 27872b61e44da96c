//! Population-level likelihood and the two-proportion baseline.
//!
//! ```bash
//! cargo run --example asymptotic
//! ```

use defiers::asymptotic::{population_mle, two_proportion_test, zero_defier_check};
use defiers::lattice::{DataConfiguration, RandomizationSpec};

fn main() -> defiers::Result<()> {
    let spec = RandomizationSpec::iid(1, 2)?;
    for (name, g) in [("vita", DataConfiguration::new(25, 25, 5, 45)), ("mortem", DataConfiguration::new(35, 15, 15, 35))] {
        let mle = population_mle(&g, &spec)?;
        let check = zero_defier_check(&g, &spec)?;
        let reg = two_proportion_test(&g)?;
        println!("{name}");
        println!("    effect {:+.2}, never-taker share in [{:.2}, {:.2}]", mle.average_effect, mle.pi1_range.0, mle.pi1_range.1);
        println!("    zero-defier maximizer exists: {} (lambda {:.3})", check.zero_defier_maximizer_exists, check.lambda);
        println!("    two-proportion z test: se {:.4}, z {:.2}, p {:.2e}", reg.standard_error, reg.z, reg.p_value);
    }
    Ok(())
}
