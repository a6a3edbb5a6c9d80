use crate::numerics::{Graph, NumericsError, Var};

/// Probability floor before taking logs, so saturated sigmoids keep the
/// hinge terms finite.
pub const LOG_FLOOR: f64 = 1e-12;

fn floored_log(g: &Graph, p: Var) -> Result<Var, NumericsError> {
    let clamped = g.clamp_min(p, LOG_FLOOR);
    g.log(clamped)
}

/// Sum of three hinges max(0, M + log p_neg - log p_pos), one per
/// corrupted modality.
pub fn max_margin_loss(
    g: &Graph,
    p_pos: Var,
    p_negs: &[Var],
    margin: f64,
) -> Result<Var, NumericsError> {
    let lp_pos = floored_log(g, p_pos)?;
    let mut hinges = Vec::with_capacity(p_negs.len());
    for &p_neg in p_negs {
        let lp_neg = floored_log(g, p_neg)?;
        let diff = g.sub(lp_neg, lp_pos)?;
        let shifted = g.add_const(diff, margin);
        hinges.push(g.relu(shifted));
    }
    g.add_n(&hinges)
}

/// Binary cross-entropy over one positive and the negatives:
/// -log p_pos - sum log(1 - p_neg).
pub fn classification_loss(g: &Graph, p_pos: Var, p_negs: &[Var]) -> Result<Var, NumericsError> {
    let lp_pos = floored_log(g, p_pos)?;
    let mut terms = vec![g.neg(lp_pos)];
    for &p_neg in p_negs {
        let one_minus = g.add_const(g.neg(p_neg), 1.0);
        let lq = floored_log(g, one_minus)?;
        terms.push(g.neg(lq));
    }
    g.add_n(&terms)
}

/// Hinges over full-response decoder log-likelihoods (Eq. 9 shape):
/// each negative case is a log-probability of the same form as the
/// positive but with one corrupted input.
pub fn generative_max_margin(
    g: &Graph,
    logp_pos: Var,
    logp_negs: &[Var],
    margin: f64,
) -> Result<Var, NumericsError> {
    let mut hinges = Vec::with_capacity(logp_negs.len());
    for &lp_neg in logp_negs {
        let diff = g.sub(lp_neg, logp_pos)?;
        let shifted = g.add_const(diff, margin);
        hinges.push(g.relu(shifted));
    }
    g.add_n(&hinges)
}

/// xe + lambda * mm.
pub fn joint_loss(g: &Graph, xe: Var, mm: Var, lambda: f64) -> Result<Var, NumericsError> {
    let weighted = g.scale(mm, lambda);
    g.add(xe, weighted)
}
