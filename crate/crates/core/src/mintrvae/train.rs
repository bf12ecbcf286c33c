//! Mini-batch training loop with the KL warm-up and scheduled-sampling
//! anneal applied per epoch.

use super::{beta_schedule, teacher_forcing_tau, LossBreakdown, RvaeError, RvaeModel};
use crate::data::WindowSample;
use crate::numerics::adam::Adam;
use crate::numerics::{Mode, Rng};

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// One entry per epoch: batch-size-weighted mean of the batch losses.
    pub history: Vec<LossBreakdown>,
}

pub fn train(model: &mut RvaeModel, windows: &[WindowSample], rng: &mut Rng) -> Result<TrainReport, RvaeError> {
    if windows.is_empty() {
        return Err(RvaeError::EmptyTrainingSet);
    }
    for w in windows {
        if w.len() != model.hyper.window {
            return Err(RvaeError::WrongWindowLength { expected: model.hyper.window, got: w.len() });
        }
    }
    let epochs = model.hyper.epochs;
    let batch_size = model.hyper.batch_size;
    let mut adam = Adam::new(model.tape(), model.hyper.lr, model.hyper.weight_decay);
    model.tape_mut().set_mode(Mode::Train);

    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..epochs {
        let beta = beta_schedule(epoch, model.hyper.beta_max, model.hyper.warmup_epochs);
        let tau = teacher_forcing_tau(epoch, epochs);
        rng.shuffle(&mut order);

        let mut sums = LossBreakdown { pose: 0.0, emotion: 0.0, label: 0.0, kl: 0.0, total: 0.0, beta_used: beta, tau_used: tau };
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(batch_size).enumerate() {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &windows[i]).collect();
            let (total, breakdown) = model.batch_loss(&batch, beta, tau, rng);
            if !breakdown.total.is_finite() {
                return Err(RvaeError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            model.tape_mut().backward(total);
            adam.step(model.tape_mut());
            model.tape_mut().reset();

            let n = chunk.len() as f64;
            sums.pose += breakdown.pose * n;
            sums.emotion += breakdown.emotion * n;
            sums.label += breakdown.label * n;
            sums.kl += breakdown.kl * n;
            sums.total += breakdown.total * n;
            seen += chunk.len();
        }
        let n = seen as f64;
        history.push(LossBreakdown {
            pose: sums.pose / n,
            emotion: sums.emotion / n,
            label: sums.label / n,
            kl: sums.kl / n,
            total: sums.total / n,
            beta_used: beta,
            tau_used: tau,
        });
    }
    model.tape_mut().set_mode(Mode::Infer);
    Ok(TrainReport { history })
}
