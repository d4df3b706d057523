/// Indices of up to `cap` frames spread evenly over `n` frames. All frames
/// when `n <= cap`; otherwise `round(i * (n - 1) / (cap - 1))` for each
/// slot, so the first and last frames are always kept. A cap of 1 keeps
/// the first frame.
pub fn sample_frames(n: usize, cap: usize) -> Vec<usize> {
    assert!(cap > 0, "cap must be positive");
    if n <= cap {
        return (0..n).collect();
    }
    if cap == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..cap)
        .map(|i| {
            // exact round-half-up of i*(n-1)/(cap-1)
            let num = 2 * i * (n - 1) + (cap - 1);
            num / (2 * (cap - 1))
        })
        .collect();
    out.dedup();
    out
}

/// Pick the sampled elements of `frames`.
pub fn sample<T: Clone>(frames: &[T], cap: usize) -> Vec<T> {
    sample_frames(frames.len(), cap)
        .into_iter()
        .map(|i| frames[i].clone())
        .collect()
}
