use crate::error::{Error, Result};

/// Discounted cumulative gain of the first `k` items of `order`
/// (indices into `relevances`).
pub fn dcg_at_k(order: &[usize], relevances: &[f64], k: usize) -> f64 {
    order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &idx)| relevances[idx] / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k of a predicted ordering. An ordering with nothing relevant to
/// find (ideal DCG of zero) scores 1.
pub fn ndcg_at_k(order: &[usize], relevances: &[f64], k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Usage("ndcg: k must be at least 1".into()));
    }
    if let Some(r) = relevances.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::Usage(format!("ndcg: relevance {r} is negative")));
    }
    if let Some(&bad) = order.iter().find(|&&i| i >= relevances.len()) {
        return Err(Error::Usage(format!("ndcg: index {bad} out of {} relevances", relevances.len())));
    }
    let mut ideal: Vec<usize> = (0..relevances.len()).collect();
    ideal.sort_by(|&a, &b| relevances[b].total_cmp(&relevances[a]));
    let idcg = dcg_at_k(&ideal, relevances, k);
    if idcg == 0.0 {
        return Ok(1.0);
    }
    Ok(dcg_at_k(order, relevances, k) / idcg)
}
