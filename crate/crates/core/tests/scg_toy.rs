mod common;

use common::scg_toy::{exact_gradient, monte_carlo};

#[test]
fn surrogate_gradient_is_unbiased_on_the_enumerable_toy() {
    let exact = exact_gradient();
    let (mean, var) = monte_carlo(100, 1000, true);
    for k in 0..2 {
        let rel = (mean[k] - exact[k]).abs() / exact[k].abs();
        assert!(rel < 0.02, "coordinate {k}: {} vs {} ({rel})", mean[k], exact[k]);
    }
    let (_, raw_var) = monte_carlo(100, 1000, false);
    for k in 0..2 {
        assert!(raw_var[k] >= var[k], "baseline increased variance on {k}");
    }
}
