//! Central finite-difference verification of tape gradients.

use super::{Tape, Var};

/// Compare analytic gradients against central finite differences for every
/// parameter on a context's tape.
///
/// `loss` must rebuild its graph from scratch on each call (the tape is
/// reset before every evaluation) and be deterministic: any randomness
/// inside it has to be reseeded identically per call.
///
/// Returns the maximum over parameter entries of
/// `|analytic − fd| / max(1, |analytic|, |fd|)`.
pub fn grad_check_in<C>(
    ctx: &mut C,
    get_tape: impl Fn(&mut C) -> &mut Tape,
    mut loss: impl FnMut(&mut C) -> Var,
    fd_step: f64,
) -> f64 {
    assert!(fd_step > 0.0, "grad_check: fd_step must be positive, got {}", fd_step);
    let params = get_tape(ctx).params();

    get_tape(ctx).reset();
    let loss_var = loss(ctx);
    get_tape(ctx).backward(loss_var);
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|&p| {
            let tape = get_tape(ctx);
            tape.grad(p).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; tape.values(p).len()])
        })
        .collect();

    let mut worst: f64 = 0.0;
    for (pi, &p) in params.iter().enumerate() {
        for i in 0..get_tape(ctx).values(p).len() {
            let orig = get_tape(ctx).values(p)[i];

            get_tape(ctx).values_mut(p)[i] = orig + fd_step;
            get_tape(ctx).reset();
            let lp = loss(ctx);
            let up = get_tape(ctx).scalar(lp);

            get_tape(ctx).values_mut(p)[i] = orig - fd_step;
            get_tape(ctx).reset();
            let lm = loss(ctx);
            let down = get_tape(ctx).scalar(lm);

            get_tape(ctx).values_mut(p)[i] = orig;

            let fd = (up - down) / (2.0 * fd_step);
            let an = analytic[pi][i];
            let err = (an - fd).abs() / 1.0_f64.max(an.abs()).max(fd.abs());
            worst = worst.max(err);
        }
    }
    get_tape(ctx).reset();
    worst
}

/// [`grad_check_in`] for a bare tape.
pub fn grad_check(tape: &mut Tape, loss: impl FnMut(&mut Tape) -> Var, fd_step: f64) -> f64 {
    grad_check_in(tape, |t| t, loss, fd_step)
}
