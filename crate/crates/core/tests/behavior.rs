//! End-to-end behavior of the adaptation loop on synthetic domains.

use ujmmd::data::{generate_synthetic, simulate_label_shift, DomainPair, SyntheticSpec};
use ujmmd::kernels::{label_kernel, KernelMatrix, LabelKernel};
use ujmmd::mmd::{jmmd_distance, mmd_marginal};
use ujmmd::pipeline::{
    adapt, evaluate_ablation, run_da, run_label_shift_experiment, HyperParams, MethodSpec, Normalization, Preset,
};

fn preset(p: Preset) -> MethodSpec {
    MethodSpec::from_preset(p, &HyperParams::SMALL).unwrap()
}

fn shifted(seed: u64) -> DomainPair {
    generate_synthetic(&SyntheticSpec::balanced(10, 20, 25, 5.0, 6.0, seed)).unwrap()
}

#[test]
fn well_separated_blobs_without_shift_are_easy() {
    for seed in 0..3 {
        let pair = generate_synthetic(&SyntheticSpec::balanced(5, 30, 25, 6.0, 0.0, seed)).unwrap();
        let acc = run_da(&pair, &preset(Preset::KnnBaseline), seed)
            .unwrap()
            .final_accuracy
            .unwrap();
        assert!(acc >= 0.9, "seed {seed}: accuracy {acc}");
    }
}

#[test]
fn identical_domains_are_solved_and_aligned() {
    let base = generate_synthetic(&SyntheticSpec::balanced(3, 10, 8, 4.0, 0.0, 5)).unwrap();
    let pair = DomainPair::new(
        base.source_features().clone(),
        base.source_labels().clone(),
        base.source_features().clone(),
        Some(base.source_labels().clone()),
    )
    .unwrap();
    for p in [Preset::KnnBaseline, Preset::Wc, Preset::WwcStar] {
        let mut method = preset(p);
        method.dim = 5;
        let result = run_da(&pair, &method, 0).unwrap();
        assert_eq!(result.final_accuracy, Some(1.0), "{p}");
        let (distance, _) = evaluate_ablation(&pair, &method, 0).unwrap();
        assert!(distance.abs() <= 1e-12, "{p}: feature distance {distance}");
    }
}

#[test]
fn run_records_one_accuracy_per_round() {
    let pair = shifted(0);
    for p in [Preset::KnnBaseline, Preset::Pca, Preset::C] {
        let result = run_da(&pair, &preset(p), 7).unwrap();
        assert_eq!(result.per_iteration_accuracy.len(), 5);
        assert_eq!(result.pseudo_label_history.as_ref().unwrap().len(), 5);
        assert_eq!(result.seed, 7);
        assert_eq!(result.preset, p.name());
    }
}

#[test]
fn learning_never_sees_target_truth() {
    let pair = shifted(1);
    let blind = DomainPair::new(
        pair.source_features().clone(),
        pair.source_labels().clone(),
        pair.target_features().clone(),
        None,
    )
    .unwrap();
    let with_truth = run_da(&pair, &preset(Preset::WcStar), 0).unwrap();
    let without = run_da(&blind, &preset(Preset::WcStar), 0).unwrap();
    assert_eq!(with_truth.pseudo_label_history, without.pseudo_label_history);
    assert!(without.final_accuracy.is_none() && without.per_iteration_accuracy.is_empty());
    assert!(evaluate_ablation(&blind, &preset(Preset::Wc), 0).is_err());
}

#[test]
fn pca_control_has_the_largest_feature_distance() {
    for seed in 0..2 {
        let pair = shifted(seed);
        let distance = |p| evaluate_ablation(&pair, &preset(p), seed).unwrap().0;
        let pca = distance(Preset::Pca);
        for p in Preset::ALL.into_iter().skip(2) {
            let d = distance(p);
            assert!(d <= pca, "seed {seed}: {p} distance {d:e} exceeds PCA {pca:e}");
        }
    }
}

#[test]
fn marginal_alignment_beats_pca_on_marginal_mmd() {
    let mut wins = 0;
    for seed in 0..10 {
        let pair = generate_synthetic(&SyntheticSpec::balanced(4, 15, 25, 5.0, 6.0, seed)).unwrap();
        let k1 = label_kernel(
            LabelKernel::Marginal,
            pair.source_labels(),
            pair.target_truth().unwrap(),
            pair.classes(),
        )
        .unwrap();
        let m = mmd_marginal(pair.n_s(), pair.n_t()).unwrap();
        let marginal = |p| {
            let a = adapt(
                pair.source_features(),
                pair.source_labels(),
                pair.target_features(),
                &preset(p),
            )
            .unwrap();
            jmmd_distance(&KernelMatrix::linear(&a.embedding), &k1, &m).unwrap()
        };
        if marginal(Preset::M) <= marginal(Preset::Pca) {
            wins += 1;
        }
    }
    assert!(
        wins >= 8,
        "M embedding had smaller marginal MMD than PCA on only {wins}/10 trials"
    );
}

#[test]
fn label_shift_experiment_is_deterministic() {
    let pair = generate_synthetic(&SyntheticSpec::balanced(4, 12, 10, 5.0, 2.0, 3)).unwrap();
    let mut method = preset(Preset::WwcStar);
    method.dim = 6;
    let a = run_label_shift_experiment(&pair, &method, 3, 40).unwrap();
    let b = run_label_shift_experiment(&pair, &method, 3, 40).unwrap();
    assert_eq!(a, b);
    let seeds: Vec<u64> = a.per_run.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, [40, 41, 42]);
    let single = run_label_shift_experiment(&pair, &method, 1, 40).unwrap();
    assert_eq!(single.std, 0.0);
    assert_eq!(single.per_run[0], a.per_run[0]);
    assert!(run_label_shift_experiment(&pair, &method, 0, 40).is_err());
}

#[test]
fn normalization_modes_change_only_preprocessing() {
    let pair = shifted(2);
    for mode in Normalization::ALL {
        let mut method = preset(Preset::KnnBaseline);
        method.normalization = mode;
        let result = run_da(&pair, &method, 0).unwrap();
        assert!(result.final_accuracy.unwrap() > 0.1, "{mode}");
    }
    let unit = |scale: f64| {
        let mut x = pair.source_features().values().clone();
        x.column_mut(0).scale_mut(scale);
        let p = DomainPair::new(
            ujmmd::data::FeatureMatrix::new(x).unwrap(),
            pair.source_labels().clone(),
            pair.target_features().clone(),
            pair.target_truth().cloned(),
        )
        .unwrap();
        run_da(&p, &preset(Preset::Wc), 0).unwrap().pseudo_label_history
    };
    // Per-sample L2 normalization removes any per-sample scale.
    assert_eq!(unit(1.0), unit(7.5));
}

/// Soft check: reported, not asserted.
#[test]
fn pseudo_label_agreement_mostly_improves() {
    let mut monotone = 0;
    for seed in 0..5 {
        let r = run_da(&shifted(seed), &preset(Preset::Wc), seed).unwrap();
        if r.per_iteration_accuracy.windows(2).all(|w| w[1] >= w[0]) {
            monotone += 1;
        }
    }
    println!("WC agreement non-decreasing across rounds on {monotone}/5 seeds");
}

/// Under the weighted-class-wise yardstick, WC optimizes the measured
/// quantity itself, so the shift-corrected kernel does not come out lower on
/// these pairs (observed 0/10 and 1/10 for λ = 0.01 and 0.1). Kept as a
/// record of the expected direction; run with `--ignored`.
#[test]
#[ignore = "direction not reproduced on synthetic label-shift pairs"]
fn shift_corrected_kernel_lowers_feature_distance_under_label_shift() {
    let mut wins = 0;
    for seed in 0..10 {
        let pair = generate_synthetic(&SyntheticSpec::balanced(5, 30, 25, 6.0, 1.0, 100 + seed)).unwrap();
        let shifted = simulate_label_shift(&pair, 0.5, seed).unwrap();
        let distance = |p| evaluate_ablation(&shifted, &preset(p), seed).unwrap().0;
        if distance(Preset::Wwc) < distance(Preset::Wc) {
            wins += 1;
        }
    }
    assert!(wins >= 8, "WWC distance below WC on only {wins}/10 seeds");
}
