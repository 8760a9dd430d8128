/// n-step discounted returns and advantages for a step-major buffer
/// (`index = step·n_workers + worker`).
///
/// `R_t = r_t + γ·R_{t+1}`, cut where `dones[t]` marks the end of an
/// episode; the last step of each worker bootstraps from `bootstrap[w]`
/// unless its episode ended there. Advantages are `R_t − v_t`.
pub fn compute_returns(
    rewards: &[f64],
    dones: &[bool],
    values: &[f64],
    bootstrap: &[f64],
    gamma: f64,
    n_workers: usize,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), dones.len());
    assert_eq!(rewards.len(), values.len());
    assert_eq!(bootstrap.len(), n_workers);
    let steps = rewards.len().checked_div(n_workers).unwrap_or(0);
    let mut returns = vec![0.0; rewards.len()];
    for w in 0..n_workers {
        let mut next = bootstrap[w];
        for t in (0..steps).rev() {
            let k = t * n_workers + w;
            if dones[k] {
                next = 0.0;
            }
            next = rewards[k] + gamma * next;
            returns[k] = next;
        }
    }
    let adv = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    (returns, adv)
}
