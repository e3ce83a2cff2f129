//! Property tests for the numerical invariants the rest of the crate relies on.

use dsmhmc::forward_models::{
    make_mask, CartesianMaskSpec, ForwardOperator, MaskedFourierOperator,
};
use dsmhmc::hmc::leapfrog;
use dsmhmc::numerics::{fft2, ifft2, simpson_line_integral};
use dsmhmc::phantom_eval::UncertaintyMap;
use dsmhmc::score_models::{IsotropicGaussianScore, TwoMoonsScore};
use dsmhmc::{ComplexImage, RngStream, ScoreModel, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_round_trip_and_parseval(lh in 0u32..7, lw in 0u32..7, seed in any::<u64>()) {
        let (h, w) = (1usize << lh, 1usize << lw);
        let mut rng = RngStream::new(seed, 0);
        let img = ComplexImage::new(rng.gaussian(&[h, w]), rng.gaussian(&[h, w])).unwrap();
        let k = fft2(&img).unwrap();
        let back = ifft2(&k).unwrap();
        let energy = |c: &ComplexImage| c.pack().norm_sq();
        prop_assert!((energy(&k) - energy(&img)).abs() <= 1e-10 * energy(&img).max(1.0));
        let err = (&back.pack() - &img.pack()).max_abs();
        prop_assert!(err <= 1e-10, "round-trip error {err}");
    }

    #[test]
    fn simpson_is_exact_for_cubic_potentials(
        seed in any::<u64>(),
        dim in 1usize..6,
        nodes in prop::sample::select(vec![4usize, 5, 7, 9]),
    ) {
        // g(x) = Σ c_i x_i³ + b·x, so g is a cubic in t along any segment.
        let mut rng = RngStream::new(seed, 1);
        let c = rng.gaussian(&[dim]);
        let bl = rng.gaussian(&[dim]);
        let (a, b) = (rng.gaussian(&[dim]), rng.gaussian(&[dim]));
        let g = |x: &Tensor| -> f64 {
            x.data().iter().zip(c.data()).zip(bl.data()).map(|((x, c), b)| c * x * x * x + b * x).sum()
        };
        let field = |x: &Tensor| -> Tensor {
            Tensor::from_vec(
                x.data().iter().zip(c.data()).zip(bl.data()).map(|((x, c), b)| 3.0 * c * x * x + b).collect(),
            )
        };
        let got = simpson_line_integral(field, &a, &b, nodes).unwrap();
        let want = g(&b) - g(&a);
        prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{got} vs {want}");
    }

    #[test]
    fn masked_fourier_adjoint_identity(seed in any::<u64>(), lw in 3u32..6, acc in 1usize..5) {
        let n = 1usize << lw;
        let spec = CartesianMaskSpec { acceleration: acc, center_fraction: 0.0, seed };
        let columns = make_mask(&spec, n, &mut RngStream::new(seed, 0)).unwrap();
        let op = MaskedFourierOperator::from_columns(&columns, n).unwrap();
        let mut rng = RngStream::new(seed, 2);
        let x = rng.gaussian(op.input_shape());
        let y = rng.gaussian(op.output_shape());
        let lhs = op.apply(&x).unwrap().dot(&y);
        let rhs = x.dot(&op.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn mask_keeps_the_centre_band(seed in any::<u64>(), acc in 2usize..6, lw in 4u32..8) {
        let n = 1usize << lw;
        let spec = CartesianMaskSpec { acceleration: acc, center_fraction: 1.0 / (2 * acc) as f64, seed };
        let m = make_mask(&spec, n, &mut RngStream::new(seed, 0)).unwrap();
        let nc = spec.center_columns(n) as isize;
        for k in 0..nc {
            let col = (k - nc / 2).rem_euclid(n as isize) as usize;
            prop_assert_eq!(m.data()[col], 1.0);
        }
        prop_assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn leapfrog_reverses_under_momentum_flip(seed in any::<u64>(), steps in 1usize..30, alpha in 0.005f64..0.1) {
        let moons = TwoMoonsScore::default();
        let score = |x: &Tensor| moons.score(x, 0.2);
        let mut rng = RngStream::new(seed, 3);
        let x0 = rng.gaussian(&[2]);
        let m0 = rng.gaussian(&[2]);
        let fwd = leapfrog(&x0, &m0, &score(&x0), score, alpha, steps).unwrap();
        prop_assume!(!fwd.divergent);
        let back = leapfrog(&fwd.x, &fwd.m.scale(-1.0), &fwd.grad, score, alpha, steps).unwrap();
        prop_assert!((&back.x - &x0).max_abs() <= 1e-9);
        prop_assert!((&back.m.scale(-1.0) - &m0).max_abs() <= 1e-9);
    }

    #[test]
    fn gaussian_denoiser_is_shrinkage(seed in any::<u64>(), tau2 in 0.05f64..5.0, sigma in 0.0f64..3.0) {
        let mut rng = RngStream::new(seed, 4);
        let mean = rng.gaussian(&[5]);
        let x = rng.gaussian(&[5]);
        let model = IsotropicGaussianScore::new(mean.clone(), tau2).unwrap();
        let denoised = x.axpy(sigma * sigma, &model.score(&x, sigma));
        let v = tau2 + sigma * sigma;
        let shrunk = x.scale(tau2 / v).axpy(sigma * sigma / v, &mean);
        prop_assert!((&denoised - &shrunk).max_abs() <= 1e-12);
    }

    #[test]
    fn uncertainty_map_mean_and_nonnegative_std(seed in any::<u64>(), n in 2usize..9) {
        let mut rng = RngStream::new(seed, 5);
        let samples: Vec<Tensor> = (0..n).map(|_| rng.gaussian(&[4, 3, 2])).collect();
        let map = UncertaintyMap::from_samples(&samples).unwrap();
        let mut mean = Tensor::zeros(&[4, 3, 2]);
        for s in &samples {
            mean.add_scaled(1.0 / n as f64, s);
        }
        prop_assert!((&map.mean - &mean).max_abs() <= 1e-14);
        prop_assert!(map.std.data().iter().all(|&s| s >= 0.0));
        prop_assert_eq!(map.std.shape(), samples[0].shape());
    }
}
