mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::wiring;
use qcorr::ml::*;
use qcorr::qcore::werner;
use qcorr::{ConfigName, DensityMatrix};

fn small_dataset() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| generate_dataset(4000, 3, wiring()))
}

fn csv_bytes(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    d.write_csv(&mut out).unwrap();
    out
}

fn random_layer(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Layer {
    Layer {
        inputs,
        outputs,
        weights: (0..inputs * outputs).map(|_| rng.random_range(-1.0..1.0)).collect(),
        biases: (0..outputs).map(|_| rng.random_range(-0.5..0.5)).collect(),
    }
}

fn random_model(seed: u64, inputs: usize) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        random_layer(&mut rng, inputs, 7),
        random_layer(&mut rng, 7, 5),
        random_layer(&mut rng, 5, 1),
    ];
    MlpModel::from_layers(Target::N, ConfigName::ALL[..inputs].to_vec(), layers).unwrap()
}

fn random_inputs(seed: u64, count: usize, inputs: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..inputs).map(|_| rng.random::<f64>()).collect()).collect()
}

#[test]
fn dataset_csv_is_deterministic_and_roundtrips() {
    let a = generate_dataset(100, 42, wiring());
    let b = generate_dataset(100, 42, wiring());
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    assert_ne!(csv_bytes(&a), csv_bytes(&generate_dataset(100, 43, wiring())));
    let back = Dataset::read_csv(csv_bytes(&a).as_slice()).unwrap();
    assert_eq!(back, a);
    let header = String::from_utf8(csv_bytes(&a)).unwrap();
    assert!(header.starts_with("l0,l1,l2,c1,c2,c3,c4,c5,cbar1,cbar2,cbar3,lbar1,lbar2,n_label,b_label,split"));
}

#[test]
fn singlet_row() {
    let row = Row::from_state(&DensityMatrix::singlet(), wiring(), Split::Test);
    assert!((row.features[ConfigName::L0.index()] - 1.0).abs() < 1e-12);
    assert!((row.n - 1.0).abs() < 1e-12);
    assert!((row.b - 1.0).abs() < 1e-12);
}

#[test]
fn split_and_label_invariants() {
    let d = generate_dataset(10_000, 5, wiring());
    let train = d.train().len();
    assert!((train as i64 - 7500).abs() <= 1);
    assert_eq!(train + d.test().len(), d.len());
    for r in &d.rows {
        assert!((0.0..=1.0).contains(&r.n));
        assert!((-1.0..=1.0 + 1e-12).contains(&r.b));
    }
    let separable = d.rows.iter().filter(|r| r.n == 0.0).count();
    assert!(separable > 0, "no separable states among 10⁴");
    let mut keys: Vec<[u64; 13]> = d.rows.iter().map(|r| r.features.map(f64::to_bits)).collect();
    keys.sort_unstable();
    keys.dedup();
    assert_eq!(keys.len(), d.len(), "duplicated rows");
}

#[test]
fn odd_sizes_split_within_one_row() {
    for n in [1, 2, 3, 7, 101] {
        let d = generate_dataset(n, 9, wiring());
        let expected = 0.75 * n as f64;
        assert!((d.train().len() as f64 - expected).abs() <= 1.0);
    }
}

#[test]
fn sampled_features_approach_exact_ones() {
    let exact = generate_dataset(20, 8, wiring());
    let noise = qcorr::noise::NoiseConfig::default();
    let sampled = generate_sampled_dataset(20, 8, wiring(), 100_000, &noise).unwrap();
    for (e, s) in exact.rows.iter().zip(&sampled.rows) {
        assert_eq!(e.n, s.n);
        assert_eq!(e.split, s.split);
        for (x, y) in e.features.iter().zip(&s.features) {
            assert!((x - y).abs() < 0.01);
        }
    }
}

#[test]
fn r2_definitions() {
    let y = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(r2(&y, &y).unwrap(), 1.0);
    assert!(r2(&y, &[2.5; 4]).unwrap().abs() < 1e-15);
    assert!(r2(&y, &[4.0, 3.0, 2.0, 1.0]).unwrap() < 0.0);
    assert!(matches!(r2(&[1.0; 3], &[1.0; 3]), Err(MlError::ZeroVariance)));
    assert!(matches!(r2(&[], &[]), Err(MlError::Empty(_))));
}

#[test]
fn training_lowers_the_loss_and_is_deterministic() {
    let hyper = Hyper { max_iter: 50, seed: 11, ..Hyper::default() };
    let a = train_mlp(small_dataset(), Target::N, &ConfigName::ALL, &hyper).unwrap();
    let b = train_mlp(small_dataset(), Target::N, &ConfigName::ALL, &hyper).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.training_log.len(), 51);
    assert!(a.training_log.last().unwrap() < &a.training_log[0]);
    assert_eq!(a.layer_sizes, vec![13, 9, 9, 9, 9, 9, 1]);
    let back = MlpModel::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    let other = train_mlp(small_dataset(), Target::N, &ConfigName::ALL, &Hyper { seed: 12, ..hyper }).unwrap();
    assert_ne!(other.layers, a.layers);
}

#[test]
fn constant_labels_are_learned() {
    let mut d = generate_dataset(1000, 4, wiring());
    for r in &mut d.rows {
        r.n = 0.3;
    }
    let hyper = Hyper { lr: 1e-3, max_iter: 1500, ..Hyper::default() };
    let m = train_mlp(&d, Target::N, &ConfigName::ALL, &hyper).unwrap();
    for r in d.test() {
        let p = m.predict_row(r);
        assert!((p - 0.3).abs() < 1e-3, "{p} log {:?}", &m.training_log[m.training_log.len() - 3..]);
    }
    assert!(matches!(r2_score(&m, &d.test()), Err(MlError::ZeroVariance)));
}

#[test]
fn huge_learning_rate_diverges() {
    let hyper = Hyper { lr: 1e200, max_iter: 20, ..Hyper::default() };
    assert!(matches!(
        train_mlp(small_dataset(), Target::B, &ConfigName::ALL, &hyper),
        Err(MlError::Divergence { .. })
    ));
}

#[test]
fn bad_inputs_are_rejected() {
    let empty = Dataset::default();
    assert!(matches!(
        train_mlp(&empty, Target::N, &ConfigName::ALL, &Hyper::default()),
        Err(MlError::Empty(_))
    ));
    assert!(matches!(
        train_mlp(small_dataset(), Target::N, &[ConfigName::L1, ConfigName::L1], &Hyper::default()),
        Err(MlError::InvalidFeatures(_))
    ));
    assert!(MlpModel::from_json("{\"target\":\"n\"}").is_err());
}

#[test]
fn l2_penalty_shrinks_weights() {
    let base = Hyper { max_iter: 200, seed: 2, ..Hyper::default() };
    let with = train_mlp(small_dataset(), Target::N, &ConfigName::ALL, &base).unwrap();
    let without = train_mlp(small_dataset(), Target::N, &ConfigName::ALL, &Hyper { l2: 0.0, ..base }).unwrap();
    assert!(with.weight_norm_sq() < without.weight_norm_sq());
}

#[test]
fn reduced_model_beats_linear_baseline_on_same_features() {
    let d = small_dataset();
    let features = [ConfigName::L1, ConfigName::C3, ConfigName::C2, ConfigName::C1, ConfigName::Lbar2];
    let hyper = Hyper { lr: 1e-3, max_iter: 500, ..Hyper::default() };
    let reduced = train_reduced(d, Target::N, &features, &hyper).unwrap();
    assert_eq!(reduced.inputs(), 5);
    let ols = fit_ols(d, Target::N, &features).unwrap();
    let test = d.test();
    let (m_mlp, m_ols) = (mse(&reduced, &test).unwrap(), mse(&ols, &test).unwrap());
    assert!(m_mlp < m_ols, "mlp {m_mlp} vs ols {m_ols}");
}

#[test]
fn ols_recovers_linear_labels() {
    let mut d = generate_dataset(500, 6, wiring());
    for r in &mut d.rows {
        r.b = 0.5 - 2.0 * r.features[1] + 3.0 * r.features[4];
    }
    let m = fit_ols(&d, Target::B, &ConfigName::ALL).unwrap();
    assert!(r2_score(&m, &d.test()).unwrap() > 1.0 - 1e-10);
}

#[test]
fn shap_dummy_feature_gets_zero() {
    let mut model = random_model(1, 5);
    for j in 0..7 {
        model.layers[0].weights[j * 5 + 2] = 0.0;
    }
    let report = shap_values(&model, &random_inputs(2, 10, 5), &random_inputs(3, 32, 5)).unwrap();
    for phi in &report.phi {
        assert!(phi[2].abs() <= 1e-9);
    }
    assert!(report.efficiency_residual() <= 1e-12);
}

#[test]
fn shap_symmetric_features_share_credit() {
    let mut model = random_model(4, 4);
    for j in 0..7 {
        model.layers[0].weights[j * 4 + 1] = model.layers[0].weights[j * 4];
    }
    let dup = |v: Vec<Vec<f64>>| v.into_iter().map(|mut x| { x[1] = x[0]; x }).collect::<Vec<_>>();
    let samples = dup(random_inputs(5, 10, 4));
    let background = dup(random_inputs(6, 40, 4));
    let report = shap_values(&model, &samples, &background).unwrap();
    for phi in &report.phi {
        assert!((phi[0] - phi[1]).abs() <= 1e-9);
    }
}

#[test]
fn shap_on_linear_function_is_centred_contribution() {
    let coef = [0.5, -1.0, 2.0];
    let f = |x: &[f64]| x.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>();
    let samples = random_inputs(7, 3, 3);
    let background = random_inputs(8, 20, 3);
    let (base, phi) = exact_shapley(f, 3, &samples, &background).unwrap();
    for (x, p) in samples.iter().zip(&phi) {
        for j in 0..3 {
            let mean = background.iter().map(|b| b[j]).sum::<f64>() / 20.0;
            assert!((p[j] - coef[j] * (x[j] - mean)).abs() < 1e-12);
        }
    }
    assert!((base - background.iter().map(|b| f(b)).sum::<f64>() / 20.0).abs() < 1e-12);
}

#[test]
fn shap_rejects_too_many_features_and_empty_background() {
    let f = |x: &[f64]| x[0];
    assert!(matches!(
        exact_shapley(f, 21, &[vec![0.0; 21]], &[vec![0.0; 21]]),
        Err(MlError::TooManyFeatures(21))
    ));
    assert!(matches!(exact_shapley(f, 2, &[vec![0.0; 2]], &[]), Err(MlError::Empty(_))));
}

#[test]
fn top_k_selection() {
    let report = ShapReport {
        features: ConfigName::ALL.to_vec(),
        base_value: 0.0,
        phi: vec![
            (0..13).map(|j| if j == 6 { 0.9 } else { 0.1 * (j % 3) as f64 }).collect(),
            (0..13).map(|j| -0.1 * (j % 3) as f64).collect(),
        ],
        predictions: vec![0.0; 2],
        sums: vec![0.0; 2],
    };
    assert_eq!(select_top_k(&report, 13).len(), 13);
    assert_eq!(select_top_k(&report, 1), vec![ConfigName::C4]);
    // mean |φ| = 0.2 ties among indices 2, 5, 8, 11 resolve canonically
    assert_eq!(
        select_top_k(&report, 4),
        vec![ConfigName::C4, ConfigName::L2, ConfigName::C3, ConfigName::Cbar1]
    );
    assert_eq!(reference_overlap(&[ConfigName::L1, ConfigName::C3, ConfigName::C2]), 2);
}

#[test]
fn trained_model_shap_efficiency_and_background() {
    let d = small_dataset();
    let model = train_mlp(d, Target::N, &ConfigName::ALL, &Hyper { max_iter: 20, ..Hyper::default() }).unwrap();
    let background = d.background();
    assert_eq!(background.len(), SHAP_BACKGROUND);
    assert!(background.iter().all(|r| r.split == Split::Train));
    assert_eq!(background, d.background());
    let report = shap_for_rows(&model, &d.test()[..2], &background).unwrap();
    assert_eq!(report.phi[0].len(), 13);
    assert!(report.efficiency_residual() <= 1e-6);
}

#[test]
fn werner_predictions_are_finite() {
    let model = random_model(9, 13);
    for i in 0..=10 {
        let row = Row::from_state(&werner(f64::from(i) / 10.0).unwrap(), wiring(), Split::Test);
        assert!(model.predict_row(&row).is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shap_efficiency(seed in any::<u64>()) {
        let model = random_model(seed, 6);
        let report = shap_values(&model, &random_inputs(seed ^ 1, 4, 6), &random_inputs(seed ^ 2, 16, 6)).unwrap();
        prop_assert!(report.efficiency_residual() <= 1e-9);
    }

    #[test]
    fn shap_is_permutation_equivariant(seed in any::<u64>(), perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let model = random_model(seed, 5);
        let samples = random_inputs(seed ^ 3, 3, 5);
        let background = random_inputs(seed ^ 4, 16, 5);
        let mut permuted = model.clone();
        for j in 0..7 {
            for (k, &p) in perm.iter().enumerate() {
                permuted.layers[0].weights[j * 5 + k] = model.layers[0].weights[j * 5 + p];
            }
        }
        let apply = |v: &[Vec<f64>]| v.iter().map(|x| perm.iter().map(|&p| x[p]).collect()).collect::<Vec<Vec<f64>>>();
        let a = shap_values(&model, &samples, &background).unwrap();
        let b = shap_values(&permuted, &apply(&samples), &apply(&background)).unwrap();
        for (pa, pb) in a.phi.iter().zip(&b.phi) {
            for (k, &p) in perm.iter().enumerate() {
                prop_assert!((pb[k] - pa[p]).abs() <= 1e-9);
            }
        }
    }
}
