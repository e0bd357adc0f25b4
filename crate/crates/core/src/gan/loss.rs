/// Squared-error targets for smoothed `paper_tanh` training: real scores
/// are pulled to `+SMOOTH_TARGET`, fake scores to `-SMOOTH_TARGET`.
pub const SMOOTH_TARGET: f64 = 0.9;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `mean(fake) - mean(real)`; minimising it maximises the score gap.
pub fn critic_loss(real: &[f64], fake: &[f64]) -> f64 {
    mean(fake) - mean(real)
}

/// Gradients of [`critic_loss`] w.r.t. each real and fake score.
pub fn critic_loss_grad(real: &[f64], fake: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        vec![-1.0 / real.len() as f64; real.len()],
        vec![1.0 / fake.len() as f64; fake.len()],
    )
}

pub fn smoothed_critic_loss(real: &[f64], fake: &[f64]) -> f64 {
    let sq = |v: &[f64], t: f64| v.iter().map(|s| (s - t) * (s - t)).sum::<f64>() / v.len() as f64;
    sq(real, SMOOTH_TARGET) + sq(fake, -SMOOTH_TARGET)
}

pub fn smoothed_critic_loss_grad(real: &[f64], fake: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = |v: &[f64], t: f64| v.iter().map(|s| 2.0 * (s - t) / v.len() as f64).collect();
    (g(real, SMOOTH_TARGET), g(fake, -SMOOTH_TARGET))
}

pub fn generator_loss(fake: &[f64]) -> f64 {
    -mean(fake)
}

pub fn generator_loss_grad(fake: &[f64]) -> Vec<f64> {
    vec![-1.0 / fake.len() as f64; fake.len()]
}
