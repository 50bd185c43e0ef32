#[path = "support/gradcheck.rs"]
mod gradcheck;

use terzina::neural::Dims;

#[test]
fn all_parameter_gradients_match_finite_differences() {
    for seed in [42, 7, 2024] {
        let (rel, at) = gradcheck::max_relative_error(Dims::new(20, 8, 16), 12, 1e-5, seed);
        println!("seed {seed}: max relative error {rel:e} at {at}");
        assert!(
            rel < 1e-4,
            "seed {seed}: max relative error {rel:e} at {at}"
        );
    }
}

#[test]
fn gradients_with_longer_sequence_and_wider_state() {
    let (rel, at) = gradcheck::max_relative_error(Dims::new(13, 5, 7), 30, 1e-5, 3);
    assert!(rel < 1e-4, "max relative error {rel:e} at {at}");
}
