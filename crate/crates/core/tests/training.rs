//! End-to-end training on the synthetic separable corpus.

use logsight_core::encoder::{
    build_vocab, integrated_gradients, predict, train, EncoderConfig, TrainOptions,
};
use logsight_core::logcore::{generate_synthetic_corpus, split_dataset, Label, SplitSizes};

#[test]
fn separable_corpus_reaches_high_validation_accuracy() {
    let corpus = generate_synthetic_corpus(700, 700, 21);
    let split = split_dataset(&corpus, SplitSizes { train: 1000, val: 200, test: 200 }, 21).unwrap();
    let cfg = EncoderConfig { seed: 21, ..Default::default() };
    let vocab = build_vocab(&split.train, &cfg).unwrap();
    let (params, report) = train(&split, &vocab, &cfg, TrainOptions::default()).unwrap();
    println!("{report:?}");
    assert_eq!(report.val_accuracy_per_epoch.len(), 3);
    assert!(report.final_train_loss.is_finite());
    assert!(*report.val_accuracy_per_epoch.last().unwrap() >= 0.95, "{report:?}");

    let held_out = split
        .test
        .iter()
        .find(|r| r.label == Some(Label::Anomaly))
        .expect("test split has anomalies");
    let p = predict(&held_out.normalized_text, &params, &vocab).unwrap();
    assert_eq!(p.label, Label::Anomaly, "{}", held_out.normalized_text);

    let attribution = integrated_gradients(&held_out.normalized_text, &params, &vocab, 128).unwrap();
    let gap = (attribution.input_logit - attribution.baseline_logit).abs();
    assert!(attribution.completeness_gap() <= 0.02 * gap + 1e-6);

    // Doubling the step count does not widen the completeness gap.
    for r in split.test.iter().take(20) {
        let coarse = integrated_gradients(&r.normalized_text, &params, &vocab, 64).unwrap();
        let fine = integrated_gradients(&r.normalized_text, &params, &vocab, 128).unwrap();
        assert!(
            fine.completeness_gap() <= coarse.completeness_gap() + 1e-12,
            "{}: {} at 128 steps vs {} at 64",
            r.normalized_text,
            fine.completeness_gap(),
            coarse.completeness_gap()
        );
    }
}
