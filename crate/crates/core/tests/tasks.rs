use mfl_core::covariance::{CovarianceKind, CovarianceModel, CovarianceSpec};
use mfl_core::tasks::{sample_directions, DirectionPolicy, InputLaw, LinkSpec, NoiseLaw, Task, TaskSpec};
use proptest::prelude::*;

fn spec(d: usize, k: usize, link: LinkSpec) -> TaskSpec {
    TaskSpec {
        d,
        k,
        link,
        noise_std: 0.0,
        input_law: InputLaw::Gaussian,
        covariance: CovarianceKind::Isotropic,
        direction_policy: DirectionPolicy::RandomOrthonormal,
        noise_law: NoiseLaw::Gaussian,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn directions_are_scaled_orthonormal(seed in any::<u64>(), d in 1usize..=40, kfrac in 0.0f64..1.0) {
        let k = 1 + ((d - 1) as f64 * kfrac) as usize;
        let model = CovarianceModel::build(&CovarianceSpec::isotropic(d)).unwrap();
        let dirs = sample_directions(d, k, DirectionPolicy::RandomOrthonormal, &model, seed).unwrap();
        let g = dirs.u.matmul(&dirs.u.transpose());
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 / k as f64 } else { 0.0 };
                prop_assert!((g.get(i, j) - want).abs() <= 1e-12);
            }
        }
        let again = sample_directions(d, k, DirectionPolicy::RandomOrthonormal, &model, seed).unwrap();
        prop_assert_eq!(dirs.u, again.u);
    }

    #[test]
    fn datasets_are_reproducible(seed in any::<u64>(), n in 1usize..50) {
        let task = Task::realize(&spec(6, 2, LinkSpec::RidgeTanh), 64, 1.0, 1.0, 3).unwrap();
        prop_assert_eq!(task.generate_dataset(n, seed).unwrap(), task.generate_dataset(n, seed).unwrap());
    }
}

#[test]
fn lipschitz_norm_target_mean() {
    // k = 1, Σ = I: y = |z| with z ~ N(0, 1), so E y = √(2/π).
    let task = Task::realize(&spec(8, 1, LinkSpec::LipschitzNorm { c: 1.0 }), 100_000, 1.0, 1.0, 0).unwrap();
    let data = task.generate_dataset(100_000, 4).unwrap();
    let n = data.n as f64;
    let mean = data.labels.iter().sum::<f64>() / n;
    let var = data.labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0);
    let want = (2.0 / std::f64::consts::PI).sqrt();
    assert!((mean - want).abs() <= 3.0 * (var / n).sqrt(), "{mean} vs {want}");
}

#[test]
fn single_direction_has_unit_norm() {
    let model = CovarianceModel::build(&CovarianceSpec::isotropic(3)).unwrap();
    let dirs = sample_directions(3, 1, DirectionPolicy::RandomOrthonormal, &model, 42).unwrap();
    assert!((dirs.u.frobenius_sq() - 1.0).abs() < 1e-12);
}
