mod support;

use support::fd;

#[test]
fn analytic_gradients_match_finite_differences() {
    for (i, case) in fd::cases(100, 17).iter().enumerate() {
        let err = fd::max_relative_error(case);
        assert!(err <= fd::TOLERANCE, "case {i}: relative error {err:e} ({:?})", case.event.cf.as_ref().map(|c| c.target.kind()));
    }
}
