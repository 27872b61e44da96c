//! Working from arm-wise treated shares only: bounds and the limited-data test.
//!
//! ```bash
//! cargo run --release --example shares
//! cargo run --release --example shares -- 100
//! ```

use defiers::hypothesis::HypothesisSet;
use defiers::lattice::{RandomizationSpec, SampleSize};
use defiers::likelihood::Engine;
use defiers::shares::{bfh_lower_bounds, limited_data_p_value, parse_share, EmptyArmConvention, SharePair, ShareSpace};

fn main() -> defiers::Result<()> {
    let n: u32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let mortem = SharePair::new(parse_share("0.7")?, parse_share("3/10")?)?;

    let (defiers, compliers) = bfh_lower_bounds(&mortem)?;
    println!("shares {mortem}: defiers >= {defiers}, compliers >= {compliers}");

    let s = SampleSize::new(n)?;
    let spec = RandomizationSpec::iid(1, 2)?;
    let space = ShareSpace::new(s, &spec);
    for c in [EmptyArmConvention::Exclude, EmptyArmConvention::SinglePoint, EmptyArmConvention::PerCoordinate] {
        println!("{c:?}: {} observable share pairs at s={s}", space.count(c));
    }

    let engine = Engine::new(s, spec)?;
    let h0 = HypothesisSet::parse("killed == 0", s)?;
    let r = limited_data_p_value(&engine, &mortem, &h0)?;
    println!("killed == 0 from shares alone: lambda {:.4}, p {:.4} (worst case {})", r.lambda, r.p_value, r.worst_case);
    Ok(())
}
