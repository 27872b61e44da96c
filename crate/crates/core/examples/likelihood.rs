//! Likelihood of type configurations given the two trial outcomes.
//!
//! ```bash
//! cargo run --example likelihood
//! ```

use defiers::lattice::{DataConfiguration, RandomizationSpec, SampleSize, TypeConfiguration};
use defiers::likelihood::{compatible_count, Engine};

fn main() -> defiers::Result<()> {
    let s = SampleSize::new(100)?;
    let spec = RandomizationSpec::iid(1, 2)?;
    let engine = Engine::new(s, spec)?;

    let vita = DataConfiguration::new(25, 25, 5, 45);
    let mortem = DataConfiguration::new(35, 15, 15, 35);

    let queries = [
        (TypeConfiguration::new(70, 0, 0, 30), vita),
        (TypeConfiguration::new(50, 0, 40, 10), vita),
        (TypeConfiguration::new(50, 0, 0, 50), mortem),
        (TypeConfiguration::new(30, 0, 40, 30), mortem),
        (TypeConfiguration::new(0, 30, 70, 0), mortem),
    ];
    for (theta, g) in queries {
        let l = engine.likelihood_exact(&theta, &g)?;
        println!("L({theta} | {g}) = {:.3e}", l.value());
        if let Some(exact) = &l.exact_value {
            let digits = exact.denom().to_string().len();
            println!("    exact: numerator {} / denominator with {digits} digits", exact.numer());
        }
    }

    for (name, g) in [("vita", vita), ("mortem", mortem)] {
        println!("{name}: {} type configurations can produce {g}", compatible_count(&g, &spec));
    }
    Ok(())
}
