//! One-sided confidence bounds on the number killed, by test inversion.
//!
//! ```bash
//! cargo run --release --example confidence_interval
//! cargo run --release --example confidence_interval -- 100
//! ```

use defiers::inference::{confidence_interval, Side};
use defiers::lattice::{DataConfiguration, RandomizationSpec, SampleSize};
use defiers::likelihood::{Engine, Mode};
use defiers::quantity::Operand;
use defiers::table::LambdaTable;

fn main() -> defiers::Result<()> {
    let n: u32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let k = n / 20;
    let s = SampleSize::new(20 * k)?;
    let engine = Engine::new(s, RandomizationSpec::iid(1, 2)?)?;
    let table = LambdaTable::build(&engine, Mode::Log, None)?;
    let killed: Operand = "killed".parse()?;

    for (name, g) in [
        ("vita", DataConfiguration::new(5 * k, 5 * k, k, 9 * k)),
        ("mortem", DataConfiguration::new(7 * k, 3 * k, 3 * k, 7 * k)),
    ] {
        let ci = confidence_interval(&engine, &table, &g, &killed, Side::Lower, 0.05, Mode::Log)?;
        println!("{name}: killed in {ci}");
        for c in &ci.scanned {
            println!("    killed = {:<4} p = {:.4}", c.value, c.p_value);
        }
    }
    Ok(())
}
