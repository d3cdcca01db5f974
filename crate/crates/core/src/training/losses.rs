//! Adversarial losses in log-sigmoid form.
//!
//! With `D = sigmoid(x)`, `-log D = softplus(-x)` and
//! `-log(1 - D) = softplus(x)`, both evaluated without overflow.

use serde::{Deserialize, Serialize};
use udfe_nn::{NnError, Result, Scalar, Tape, Var};

use crate::models::Reduction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLossForm {
    /// `-E[log D(G)]` on both heads.
    #[default]
    NonSaturating,
    /// `E[log(1 - D(G))]` on both heads, the literal complement of the
    /// discriminator objective. Its value is never positive.
    Minimax,
}

/// Loss terms kept separately for logging.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub global: Var,
    pub local: Var,
}

fn check_finite<T: Scalar>(tape: &Tape<T>, vars: &[Var]) -> Result<()> {
    for &v in vars {
        if !tape.value(v).all_finite() {
            return Err(NnError::NonFinite("logits".into()));
        }
    }
    Ok(())
}

fn batch_of<T: Scalar>(tape: &Tape<T>, v: Var) -> f64 {
    tape.value(v).shape()[0] as f64
}

/// `softplus(sign · x)` aggregated per `reduction`: mean over all
/// elements, or sum divided by the batch size.
fn aggregate<T: Scalar>(tape: &mut Tape<T>, x: Var, sign: f64, reduction: Reduction) -> Var {
    let b = batch_of(tape, x);
    let s = if sign < 0.0 { tape.scale(x, -1.0) } else { x };
    let sp = tape.softplus(s);
    match reduction {
        Reduction::Mean => tape.mean(sp),
        Reduction::Sum => {
            let total = tape.sum(sp);
            tape.scale(total, 1.0 / b)
        }
    }
}

/// `L_D = L_global + L_local` for the real and fake batches.
pub fn discriminator_loss<T: Scalar>(
    tape: &mut Tape<T>,
    global_real: Var,
    global_fake: Var,
    local_real: Var,
    local_fake: Var,
    reduction: Reduction,
) -> Result<LossTerms> {
    check_finite(tape, &[global_real, global_fake, local_real, local_fake])?;
    let gr = aggregate(tape, global_real, -1.0, Reduction::Mean);
    let gf = aggregate(tape, global_fake, 1.0, Reduction::Mean);
    let global = tape.add(gr, gf)?;
    let lr = aggregate(tape, local_real, -1.0, reduction);
    let lf = aggregate(tape, local_fake, 1.0, reduction);
    let local = tape.add(lr, lf)?;
    let total = tape.add(global, local)?;
    Ok(LossTerms { total, global, local })
}

pub fn generator_loss<T: Scalar>(
    tape: &mut Tape<T>,
    global_fake: Var,
    local_fake: Var,
    form: GeneratorLossForm,
    reduction: Reduction,
) -> Result<LossTerms> {
    check_finite(tape, &[global_fake, local_fake])?;
    let (global, local) = match form {
        GeneratorLossForm::NonSaturating => (
            aggregate(tape, global_fake, -1.0, Reduction::Mean),
            aggregate(tape, local_fake, -1.0, reduction),
        ),
        GeneratorLossForm::Minimax => {
            let g = aggregate(tape, global_fake, 1.0, Reduction::Mean);
            let l = aggregate(tape, local_fake, 1.0, reduction);
            (tape.scale(g, -1.0), tape.scale(l, -1.0))
        }
    };
    let total = tape.add(global, local)?;
    Ok(LossTerms { total, global, local })
}
