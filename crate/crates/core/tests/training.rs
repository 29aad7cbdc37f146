use checkworthy::corpus::{split, Dataset, Tweet};
use checkworthy::model::init_weights;
use checkworthy::synthetic::{bundled_corpus, separable_corpus, tokenizer};
use checkworthy::train::{encode_dataset, evaluate, fine_tune, grid_search, TrainConfig, TrainError};
use checkworthy::{EncoderConfig, HeadVariant, SplitSpec};

fn desk(variant: HeadVariant) -> EncoderConfig {
    EncoderConfig {
        head_variant: variant,
        ..EncoderConfig::desk(tokenizer().vocab().len())
    }
}

fn desk_config(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: lr,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn overfits_separable_corpus_with_both_heads() {
    let data = separable_corpus();
    let tok = tokenizer();
    for variant in [HeadVariant::StandardPooled, HeadVariant::MeanLastTwo] {
        let model = desk(variant);
        let w = init_weights(&model, 11).unwrap();
        let (trained, history) =
            fine_tune(&w, &model, &data, &data, &tok, &desk_config(50, 1e-3)).unwrap();
        assert_eq!(history.epochs.len(), 50);
        let first = history.epochs.iter().position(|r| r.val_acc == 1.0);
        assert!(first.is_some(), "{variant:?} never reached full training accuracy");
        let examples = encode_dataset(&data, &tok, model.max_seq_len).unwrap();
        let eval = evaluate(&trained, &model, &examples).unwrap();
        assert_eq!(eval.accuracy, 1.0);
    }
}

#[test]
fn drives_training_loss_below_one_hundredth() {
    let data = separable_corpus();
    let tok = tokenizer();
    for variant in [HeadVariant::StandardPooled, HeadVariant::MeanLastTwo] {
        let model = desk(variant);
        let w = init_weights(&model, 11).unwrap();
        let cfg = TrainConfig { batch_size: 8, ..desk_config(200, 1e-3) };
        let (trained, _) = fine_tune(&w, &model, &data, &data, &tok, &cfg).unwrap();
        let examples = encode_dataset(&data, &tok, model.max_seq_len).unwrap();
        let eval = evaluate(&trained, &model, &examples).unwrap();
        assert!(eval.loss < 0.01, "{variant:?}: final loss {}", eval.loss);
    }
}

#[test]
fn same_seed_same_history_and_weights() {
    let data = bundled_corpus();
    let parts = split(&data, &SplitSpec::new(&[("train", 0.8), ("val", 0.2)], 1, true)).unwrap();
    let tok = tokenizer();
    let model = desk(HeadVariant::MeanLastTwo);
    let w = init_weights(&model, 5).unwrap();
    let cfg = TrainConfig { batch_size: 16, ..desk_config(2, 1e-3) };
    let a = fine_tune(&w, &model, &parts[0].1, &parts[1].1, &tok, &cfg).unwrap();
    let b = fine_tune(&w, &model, &parts[0].1, &parts[1].1, &tok, &cfg).unwrap();
    assert_eq!(a.1, b.1);
    assert_eq!(a.0, b.0);
    let c = fine_tune(&w, &model, &parts[0].1, &parts[1].1, &tok, &TrainConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn tiny_learning_rate_is_near_no_op() {
    let data = bundled_corpus();
    let parts = split(&data, &SplitSpec::new(&[("train", 0.8), ("val", 0.2)], 1, true)).unwrap();
    let tok = tokenizer();
    let model = desk(HeadVariant::StandardPooled);
    let w = init_weights(&model, 5).unwrap();
    let val = encode_dataset(&parts[1].1, &tok, model.max_seq_len).unwrap();
    let before = evaluate(&w, &model, &val).unwrap();
    let (_, history) =
        fine_tune(&w, &model, &parts[0].1, &parts[1].1, &tok, &desk_config(1, 1e-12)).unwrap();
    let after = &history.epochs[0];
    assert!((after.val_loss - before.loss).abs() < 1e-6);
    assert_eq!(after.val_acc, before.accuracy);
}

#[test]
fn contract_errors() {
    let tok = tokenizer();
    let model = desk(HeadVariant::MeanLastTwo);
    let w = init_weights(&model, 5).unwrap();
    let data = separable_corpus();
    let empty = Dataset::new("empty", vec![]).unwrap();
    let err = fine_tune(&w, &model, &empty, &data, &tok, &desk_config(1, 1e-3)).unwrap_err();
    assert!(matches!(err, TrainError::Contract(_)), "{err}");

    let wrong = EncoderConfig { vocab_size: model.vocab_size + 1, ..model.clone() };
    let w2 = init_weights(&wrong, 5).unwrap();
    let err = fine_tune(&w2, &wrong, &data, &data, &tok, &desk_config(1, 1e-3)).unwrap_err();
    assert!(matches!(err, TrainError::Config(_)), "{err}");

    let unlabeled = Dataset::new("u", vec![Tweet::new("T1", "1", "hello", None)]).unwrap();
    let err = fine_tune(&w, &model, &unlabeled, &data, &tok, &desk_config(1, 1e-3)).unwrap_err();
    assert!(matches!(err, TrainError::Contract(_)), "{err}");

    let err = grid_search(&[], &model, &data, &data, &tok, || Ok(w.clone())).unwrap_err();
    assert!(matches!(err, TrainError::Contract(_)), "{err}");
}

#[test]
fn grid_search_selection() {
    let data = separable_corpus();
    let tok = tokenizer();
    let model = desk(HeadVariant::MeanLastTwo);
    let factory = || Ok(init_weights(&model, 9)?);

    let single = grid_search(&[desk_config(2, 1e-3)], &model, &data, &data, &tok, factory).unwrap();
    assert_eq!(single.best_index, 0);
    assert_eq!(single.best_config, desk_config(2, 1e-3));

    let grid = [desk_config(20, 1e-12), desk_config(20, 1e-3), desk_config(20, 1e-12)];
    let result = grid_search(&grid, &model, &data, &data, &tok, factory).unwrap();
    assert_eq!(result.best_index, 1);
    assert_eq!(result.best_config.learning_rate, 1e-3);
    assert_eq!(result.histories.len(), 3);
    assert_eq!(result.histories[0], result.histories[2]);
}
