use super::PipelineConfig;

/// Half-open `[start, end)` interval in seconds.
pub type Interval = (f64, f64);

/// Tile a video of `duration` seconds into non-overlapping
/// (context, response) window pairs anchored at t = 0. Trailing partial
/// windows are discarded, so a 60-second video yields exactly two pairs.
pub fn segment_windows(duration: f64, cfg: &PipelineConfig) -> Vec<(Interval, Interval)> {
    let stride = cfg.context_secs + cfg.response_secs;
    let mut out = Vec::new();
    let mut k = 0f64;
    while (k + 1.0) * stride <= duration {
        let base = k * stride;
        out.push((
            (base, base + cfg.context_secs),
            (base + cfg.context_secs, base + stride),
        ));
        k += 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_seconds_gives_two_instances() {
        let cfg = PipelineConfig::default();
        let w = segment_windows(60.0, &cfg);
        assert_eq!(
            w,
            vec![
                ((0.0, 20.0), (20.0, 30.0)),
                ((30.0, 50.0), (50.0, 60.0)),
            ]
        );
    }

    #[test]
    fn partial_trailing_window_is_dropped() {
        let cfg = PipelineConfig::default();
        assert_eq!(segment_windows(59.9, &cfg).len(), 1);
        assert!(segment_windows(29.0, &cfg).is_empty());
    }
}
