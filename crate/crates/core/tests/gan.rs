mod common;

use common::{toy_config, toy_dataset};
use topoforge::gan::{
    architecture, critic_loss, critic_loss_grad, embed_label, generator_loss, generator_loss_grad, read_metrics,
    smoothed_critic_loss, smoothed_critic_loss_grad, train, ConditionLabel, CriticMode, CwganModel, GanConfig, StepKind,
    TrainOptions, METRICS_FILE,
};
use topoforge::nn::NdArray;
use topoforge::Error;

#[test]
fn loss_examples() {
    assert_eq!(critic_loss(&[0.3, -0.1], &[0.3, -0.1]), 0.0);
    assert_eq!(critic_loss(&[1.0, 1.0], &[-1.0, -1.0]), -2.0);
    assert_eq!(generator_loss(&[0.0, 0.0]), 0.0);
    assert_eq!(generator_loss(&[2.0, 4.0]), -3.0);
    assert!(generator_loss(&[1.0, 2.0]) < generator_loss(&[1.0, 1.5]));
}

#[test]
fn loss_gradients_match_finite_differences() {
    let real = [0.4, -1.2, 0.7];
    let fake = [0.1, 0.9, -0.3, 2.0];
    let h = 1e-6;
    let check = |f: &dyn Fn(&[f64], &[f64]) -> f64, gr: Vec<f64>, gf: Vec<f64>| {
        for i in 0..real.len() {
            let (mut p, mut m) = (real, real);
            p[i] += h;
            m[i] -= h;
            let fd = (f(&p, &fake) - f(&m, &fake)) / (2.0 * h);
            assert!((fd - gr[i]).abs() <= 1e-4 * fd.abs().max(1e-3));
        }
        for i in 0..fake.len() {
            let (mut p, mut m) = (fake, fake);
            p[i] += h;
            m[i] -= h;
            let fd = (f(&real, &p) - f(&real, &m)) / (2.0 * h);
            assert!((fd - gf[i]).abs() <= 1e-4 * fd.abs().max(1e-3));
        }
    };
    let (gr, gf) = critic_loss_grad(&real, &fake);
    assert_eq!(gr, vec![-1.0 / 3.0; 3]);
    assert_eq!(gf, vec![0.25; 4]);
    check(&critic_loss, gr, gf);
    let (gr, gf) = smoothed_critic_loss_grad(&real, &fake);
    check(&smoothed_critic_loss, gr, gf);
    let g = generator_loss_grad(&fake);
    for i in 0..fake.len() {
        let (mut p, mut m) = (fake, fake);
        p[i] += h;
        m[i] -= h;
        let fd = (generator_loss(&p) - generator_loss(&m)) / (2.0 * h);
        assert!((fd - g[i]).abs() < 1e-8);
    }
}

#[test]
fn default_and_desk_shapes() {
    let model = CwganModel::new(&GanConfig { gen_channels: 16, critic_channels: 4, ..GanConfig::default() }).unwrap();
    let out = model.sample(0.4, 2, 1).unwrap();
    assert_eq!(out.fields.len(), 2);
    for f in &out.fields {
        assert_eq!((f.nely(), f.nelx()), (120, 120));
        assert!(f.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let z = NdArray::new(vec![3, 120], vec![0.1; 360]).unwrap();
    let imgs = model.generator.generate(&z, &[0.3, 0.5, 0.7]).unwrap();
    assert_eq!(model.critic.score(&imgs, &[0.3, 0.5, 0.7]).unwrap().len(), 3);

    let desk = CwganModel::new(&GanConfig::desk()).unwrap();
    let f = &desk.sample(0.5, 1, 0).unwrap().fields[0];
    assert_eq!((f.nely(), f.nelx()), (48, 48));
}

#[test]
fn unreachable_resolution_lists_valid_ones() {
    let err = CwganModel::new(&GanConfig { resolution: (50, 50), ..GanConfig::desk() }).err().unwrap();
    match err {
        Error::Config(m) => assert!(m.contains("48") && m.contains("120") && m.contains("50x50"), "{m}"),
        other => panic!("{other}"),
    }
}

#[test]
fn config_invariants_are_checked() {
    for cfg in [
        GanConfig { latent_dim: 0, ..toy_config() },
        GanConfig { clip_c: 0.0, ..toy_config() },
        GanConfig { n_critic: 0, ..toy_config() },
    ] {
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
    assert!(ConditionLabel::new(f64::NAN).is_err());
    assert!(!ConditionLabel::new(2.0).unwrap().in_training_range());
    assert!(ConditionLabel::new(0.45).unwrap().in_training_range());
}

#[test]
fn paper_tanh_scores_are_bounded() {
    let cfg = GanConfig { critic_mode: CriticMode::PaperTanh, ..toy_config() };
    let mut model = CwganModel::new(&cfg).unwrap();
    // every weight at the clipping bound, the largest a trained critic holds
    let c = cfg.clip_c as f32;
    for p in model.critic.body.params_mut() {
        p.value.iter_mut().for_each(|v| *v = if *v > 0.0 { c } else { -c });
    }
    let x = NdArray::new(vec![5, 1, 12, 12], (0..720).map(|i| (i % 7) as f32 / 6.0).collect()).unwrap();
    let s = model.critic.score(&x, &[0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
    assert_eq!(s.len(), 5);
    assert!(s.iter().all(|v| v.abs() < 1.0));
}

#[test]
fn embedding_behaviour() {
    let mut model = CwganModel::new(&toy_config()).unwrap();
    let e = embed_label(&model.critic.embed, &[0.4], &[1, 12, 12]).unwrap();
    assert_eq!(e.shape(), &[1, 1, 12, 12]);
    let a = embed_label(&model.critic.embed, &[0.3], &[144]).unwrap();
    let b = embed_label(&model.critic.embed, &[0.7], &[144]).unwrap();
    let dist: f32 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt();
    assert!(dist > 0.0);

    // an all-ones embedding leaves the image untouched
    let z = NdArray::new(vec![1, 6], vec![0.3, -0.2, 1.0, 0.5, -1.1, 0.05]).unwrap();
    let p = model.generator.embed.layer_params_mut(0);
    p[0].value.iter_mut().for_each(|w| *w = 0.0);
    p[1].value.iter_mut().for_each(|b| *b = 1.0);
    let direct = model.generator.body.predict(&z).unwrap();
    let via = model.generator.generate(&z, &[0.55]).unwrap();
    for (d, v) in direct.data().iter().zip(via.data()) {
        assert_eq!((d + 1.0) * 0.5, *v);
    }
}

#[test]
fn labels_change_generator_output() {
    let model = CwganModel::new(&toy_config()).unwrap();
    let z = NdArray::new(vec![2, 6], vec![0.5, -0.4, 1.2, 0.3, -0.9, 0.7, 0.5, -0.4, 1.2, 0.3, -0.9, 0.7]).unwrap();
    let out = model.generator.generate(&z, &[0.3, 0.7]).unwrap();
    let d: f32 = out.sample(0).iter().zip(out.sample(1)).map(|(a, b)| (a - b).powi(2)).sum();
    assert!(d > 0.0);
}

#[test]
fn sampling_is_deterministic() {
    let model = CwganModel::new(&toy_config()).unwrap();
    let a = model.sample(0.4, 3, 11).unwrap();
    let b = model.sample(0.4, 3, 11).unwrap();
    assert_eq!(a.fields, b.fields);
    assert!(a.seconds_per_sample > 0.0);
    assert_ne!(a.fields, model.sample(0.4, 3, 12).unwrap().fields);
    assert!(model.sample(0.4, 0, 1).is_err());
}

#[test]
fn one_epoch_follows_the_schedule() {
    let data = toy_dataset(8, 12, 12);
    let dir = tempfile::tempdir().unwrap();
    let cfg = GanConfig { batch_size: 3, n_critic: 4, ..toy_config() };
    let out = train(&data, &cfg, &TrainOptions::new(dir.path()), |_| {}).unwrap();
    // ceil(8 / 3) real batches, each n_critic critic steps and one generator step
    assert_eq!(out.metrics.len(), 3 * 5);
    for (i, m) in out.metrics.iter().enumerate() {
        assert_eq!(m.step, i as u64);
        let expect = if i % 5 == 4 { StepKind::Generator } else { StepKind::Critic };
        assert_eq!(m.kind, expect);
    }
    assert_eq!(out.state.generator_steps, 3);
    assert_eq!(out.state.critic_steps, 12);
    assert_eq!(read_metrics(&dir.path().join(METRICS_FILE)).unwrap().len(), 15);
}

#[test]
fn dataset_resolution_must_match() {
    let data = toy_dataset(4, 24, 12);
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(train(&data, &toy_config(), &TrainOptions::new(dir.path()), |_| {}), Err(Error::Config(_))));
}

#[test]
fn checkpoint_round_trip_reproduces_samples() {
    let data = toy_dataset(8, 12, 12);
    let dir = tempfile::tempdir().unwrap();
    let cfg = GanConfig { epochs: 2, ..toy_config() };
    let out = train(&data, &cfg, &TrainOptions::new(dir.path()), |_| {}).unwrap();
    let loaded = CwganModel::load(&out.checkpoint).unwrap();
    let bits = |m: &CwganModel| {
        m.generator
            .embed
            .params()
            .chain(m.generator.body.params())
            .chain(m.critic.embed.params())
            .chain(m.critic.body.params())
            .flat_map(|p| p.value.iter().chain(&p.accum).map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&out.model), bits(&loaded));
    assert_eq!(out.model.sample(0.5, 4, 3).unwrap().fields, loaded.sample(0.5, 4, 3).unwrap().fields);

    // a checkpoint whose stored layers disagree with its config is refused
    let mut bytes = std::fs::read(&out.checkpoint).unwrap();
    let needle = b"\"latent_dim\":6";
    let at = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
    bytes[at + needle.len() - 1] = b'7';
    let bad = dir.path().join("bad.cwto");
    std::fs::write(&bad, bytes).unwrap();
    assert!(CwganModel::load(&bad).is_err());
}

#[test]
fn architecture_is_reported() {
    let arch = architecture(&GanConfig::desk()).unwrap();
    let json = serde_json::to_string(&arch).unwrap();
    assert!(json.contains("conv_transpose"));
    // 3x3 base and four upsampling stages for 48x48
    assert_eq!(arch.generator.iter().filter(|s| s.name() == "conv_transpose").count(), 4);
    assert_eq!(arch.critic.iter().filter(|s| s.name() == "conv").count(), 4);
}

#[test]
fn clipping_schedule_and_resume() {
    let data = toy_dataset(8, 12, 12);
    let cfg = GanConfig { epochs: 25, ..toy_config() };

    let full_dir = tempfile::tempdir().unwrap();
    let full = train(&data, &cfg, &TrainOptions::new(full_dir.path()), |_| {}).unwrap();
    assert_eq!(full.state.generator_steps, 50);
    let gens: Vec<_> = full.metrics.iter().filter(|m| m.kind == StepKind::Generator).collect();
    assert_eq!(gens.len(), 50);
    for m in &full.metrics {
        if m.kind == StepKind::Critic {
            assert!(m.max_critic_weight.unwrap() <= cfg.clip_c);
        }
    }
    // exactly n_critic critic steps between generator steps
    let mut run = 0;
    for m in &full.metrics {
        match m.kind {
            StepKind::Critic => run += 1,
            StepKind::Generator => {
                assert_eq!(run, cfg.n_critic);
                run = 0;
            }
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let mut opts = TrainOptions::new(dir.path());
    opts.stop_after_generator_steps = Some(17);
    let first = train(&data, &cfg, &opts, |_| {}).unwrap();
    assert_eq!(first.state.generator_steps, 17);
    opts.stop_after_generator_steps = None;
    opts.resume = true;
    let second = train(&data, &cfg, &opts, |_| {}).unwrap();
    assert_eq!(second.metrics.first().unwrap().step, first.metrics.len() as u64);

    let a = read_metrics(&full_dir.path().join(METRICS_FILE)).unwrap();
    let b = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.same_values(y)));
    assert_eq!(full.model.sample(0.5, 2, 9).unwrap().fields, second.model.sample(0.5, 2, 9).unwrap().fields);
}

#[test]
fn resume_discards_records_after_the_checkpoint() {
    let data = toy_dataset(8, 12, 12);
    let cfg = GanConfig { epochs: 3, ..toy_config() };
    let dir = tempfile::tempdir().unwrap();
    let mut opts = TrainOptions::new(dir.path());
    opts.checkpoint_every = 2;
    train(&data, &cfg, &opts, |_| {}).unwrap();
    // simulate a crash after step 3: rewind the checkpoint by training a
    // fresh run that stops at 2 generator steps, then append junk records
    let dir2 = tempfile::tempdir().unwrap();
    let mut opts2 = TrainOptions::new(dir2.path());
    opts2.stop_after_generator_steps = Some(2);
    train(&data, &cfg, &opts2, |_| {}).unwrap();
    let metrics = dir2.path().join(METRICS_FILE);
    let mut text = std::fs::read_to_string(&metrics).unwrap();
    let extra = text.lines().last().unwrap().to_string();
    text.push_str(&extra);
    text.push('\n');
    std::fs::write(&metrics, text).unwrap();

    opts2.stop_after_generator_steps = None;
    opts2.resume = true;
    train(&data, &cfg, &opts2, |_| {}).unwrap();
    let a = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    let b = read_metrics(&metrics).unwrap();
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.same_values(y)));
}

#[test]
fn resume_recovers_from_a_torn_final_record() {
    let data = toy_dataset(8, 12, 12);
    let cfg = GanConfig { epochs: 3, ..toy_config() };
    let dir = tempfile::tempdir().unwrap();
    train(&data, &cfg, &TrainOptions::new(dir.path()), |_| {}).unwrap();

    let dir2 = tempfile::tempdir().unwrap();
    let mut opts = TrainOptions::new(dir2.path());
    opts.stop_after_generator_steps = Some(2);
    train(&data, &cfg, &opts, |_| {}).unwrap();
    let metrics = dir2.path().join(METRICS_FILE);
    let mut text = std::fs::read_to_string(&metrics).unwrap();
    let last = text.lines().last().unwrap().to_string();
    text.push_str(&last[..last.len() / 2]);
    std::fs::write(&metrics, &text).unwrap();
    assert!(matches!(read_metrics(&metrics), Err(Error::Format { .. })));

    opts.stop_after_generator_steps = None;
    opts.resume = true;
    train(&data, &cfg, &opts, |_| {}).unwrap();
    let a = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    let b = read_metrics(&metrics).unwrap();
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.same_values(y)));
}
