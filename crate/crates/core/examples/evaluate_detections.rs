//! Average precision under both matching schemes, and a bootstrap interval
//! for the difference between two detectors.
//!
//! ```text
//! cargo run --release --example evaluate_detections
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sartriage::eval::{bootstrap_ap_difference, evaluate, Dump, GroundTruth, MatchPolicy, ScoredBox, Scheme};
use sartriage::geometry::BoundingBox;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut gt, mut tight, mut loose) = (GroundTruth::new(), Dump::new(), Dump::new());
    for i in 0..60 {
        let id = format!("frame_{i:03}");
        // a group of two people standing close together
        let a = BoundingBox::image(100.0 + rng.random_range(0.0..300.0), 200.0, 18.0, 40.0);
        let b = a.translate(20.0, 0.0);
        gt.insert(id.clone(), vec![a, b]);
        let s = rng.random_range(0.4..1.0);
        tight.insert(id.clone(), vec![ScoredBox::new(a, s), ScoredBox::new(b, s * 0.9)]);
        // one box around the whole group
        loose.insert(id, vec![ScoredBox::new(a.union_hull(&b), s)]);
    }

    for scheme in [Scheme::Voc2012, Scheme::SarApd] {
        let policy = MatchPolicy::for_scheme(scheme);
        for (name, dump) in [("per-person", &tight), ("group box", &loose)] {
            let r = evaluate(dump, &gt, &policy, 0.5);
            println!("{scheme:?} {name:<10} AP {:.3}  P {:.3}  R {:.3}", r.average_precision, r.precision, r.recall);
        }
    }

    let b = bootstrap_ap_difference(&tight, &loose, &gt, &MatchPolicy::voc2012(), 2000, 0.95, 42)?;
    println!("VOC delta AP {:.3}, 95% CI [{:.3}, {:.3}]", b.delta_ap, b.ci_low, b.ci_high);
    Ok(())
}
