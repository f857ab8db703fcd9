//! Quota cuts of an ordered sequence of masses at integer thresholds.

/// Shares within this fraction of 0 or 1 are snapped and the unit promoted.
pub const SNAP_TOLERANCE: f64 = 1e-9;

/// Cuts `order` (units with `mass[unit]`) into `parts` consecutive pieces of
/// mass 1 each. Returns, per unit, the `(part, fraction)` entries in part
/// order; fractions are of the unit's own mass and sum to 1.
///
/// A unit with mass above 1 may span more than two parts.
pub fn quota_cut(order: &[usize], mass: &[f64], parts: usize) -> Vec<Vec<(usize, f64)>> {
    let mut alloc: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mass.len()];
    let mut part = 0usize;
    let mut filled = 0.0f64;
    for &u in order {
        let m = mass[u];
        let mut remaining = m;
        let mut pieces: Vec<(usize, f64)> = Vec::new();
        while remaining > 0.0 {
            if part + 1 >= parts {
                pieces.push((part, remaining));
                filled += remaining;
                break;
            }
            let space = 1.0 - filled;
            if space <= SNAP_TOLERANCE * m {
                part += 1;
                filled = 0.0;
                continue;
            }
            if remaining - space <= SNAP_TOLERANCE * m {
                pieces.push((part, remaining));
                filled += remaining;
                if filled >= 1.0 - SNAP_TOLERANCE * m {
                    part += 1;
                    filled = 0.0;
                }
                break;
            }
            pieces.push((part, space));
            remaining -= space;
            part += 1;
            filled = 0.0;
        }
        let total: f64 = pieces.iter().map(|p| p.1).sum();
        alloc[u] = pieces.into_iter().map(|(p, s)| (p, s / total)).collect();
        if alloc[u].is_empty() {
            alloc[u].push((part.min(parts.saturating_sub(1)), 1.0));
        }
    }
    alloc
}
