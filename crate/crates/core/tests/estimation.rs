//! Statistical behavior of the weighted ECF estimator on long samples.

use levy_garch::ecf::score_system;
use levy_garch::garch::simulate;
use levy_garch::mle::{ml_estimate, MlOptions};
use levy_garch::{estimate, EcfOptions, GarchParams, NoiseModel, UGrid};

fn truth() -> GarchParams {
    GarchParams::new(0.1, vec![0.2], vec![0.7]).unwrap()
}

fn frob(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.norm()
}

#[test]
fn jacobian_mean_matches_population_value() {
    // At θ* the score summands are martingale differences and the expected
    // Jacobian block is E[∂h̄_k/∂θ] = −u_k φ′(u_k) · M*: the e^{iu_kε}
    // factors average to φ and the ∂w-term drops out. The measured Jacobian
    // on a long sample must reproduce the closed form — including its sign,
    // which a naive reading of the score differential gets wrong.
    let noise = NoiseModel::Gaussian;
    let sim = simulate(&truth(), &noise, 200_000, 2_000, 515).unwrap();
    let grid = UGrid::uniform(0.5, 4).unwrap();
    let sys = score_system(&truth(), &noise, &sim.y, &grid, 100, true).unwrap();
    let jac = sys.jac.unwrap();
    let p = 3;

    for (k, &u) in grid.points().iter().enumerate() {
        let target = -u * noise.cf_deriv(u); // = u² e^{−u²/2} > 0
        let expect = target * &sys.m_hat;
        let block_re =
            nalgebra::DMatrix::from_fn(p, p, |i, j| jac[(k * p + i, j)].re);
        let block_im =
            nalgebra::DMatrix::from_fn(p, p, |i, j| jac[(k * p + i, j)].im);
        let scale = frob(&expect);
        assert!(
            frob(&(block_re.clone() - &expect)) <= 0.05 * scale,
            "real part of block {k} off: got\n{block_re}\nexpected\n{expect}"
        );
        assert!(
            frob(&block_im) <= 0.05 * scale,
            "imaginary part of block {k} should vanish on average"
        );
        // The sign itself: a flipped identity would miss by 2·scale.
        assert!(block_re[(0, 0)] > 0.0);
    }
}

#[test]
fn variance_gamma_estimation_recovers_truth() {
    let noise = NoiseModel::variance_gamma(0.5).unwrap();
    let sim = simulate(&truth(), &noise, 20_000, 2_000, 99).unwrap();
    let fit = estimate(&sim.y, &noise, 1, 1, &EcfOptions::default()).unwrap();

    let target = truth().theta();
    for i in 0..3 {
        let se = fit.cov[(i, i)].sqrt();
        let err = (fit.theta[i] - target[i]).abs();
        assert!(
            err <= (5.0 * se).max(0.02),
            "component {i}: error {err:.4} vs se {se:.4}"
        );
    }
    assert!(!fit.condition1_flag);
    assert!(fit.half_grad_norm <= 1e-7);

    // The Gaussian QML initializer is consistent under misspecified noise;
    // it must already be in the neighborhood.
    let ml = fit.ml.as_ref().unwrap();
    let ml_theta = ml.params.theta();
    for i in 0..3 {
        assert!((ml_theta[i] - target[i]).abs() <= 0.15);
    }
}

#[test]
fn ecf_and_ml_agree_on_gaussian_data() {
    let noise = NoiseModel::Gaussian;
    let sim = simulate(&truth(), &noise, 20_000, 2_000, 4242).unwrap();
    let ml = ml_estimate(&sim.y, &noise, 1, 1, &MlOptions::default()).unwrap();
    let ecf = estimate(&sim.y, &noise, 1, 1, &EcfOptions::default()).unwrap();

    let target = truth().theta();
    let ml_theta = ml.params.theta();
    for i in 0..3 {
        assert!((ml_theta[i] - target[i]).abs() <= 0.1);
        assert!((ecf.theta[i] - target[i]).abs() <= 0.1);
        // Both consistent at the same rate on the same data: they must be
        // much closer to each other than to a wrong valley.
        assert!((ecf.theta[i] - ml_theta[i]).abs() <= 0.05);
    }
}
