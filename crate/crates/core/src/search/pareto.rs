use super::Direction;

/// `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64], directions: &[Direction]) -> bool {
    let mut strictly = false;
    for ((&x, &y), d) in a.iter().zip(b).zip(directions) {
        let (better, worse) = match d {
            Direction::Maximize => (x > y, x < y),
            Direction::Minimize => (x < y, x > y),
        };
        if worse {
            return false;
        }
        strictly |= better;
    }
    strictly
}

/// Indices of non-dominated points, in input order.
///
/// Points are sorted lexicographically by direction-adjusted value so each one
/// only needs checking against the running front, which holds every point that
/// could dominate it.
pub fn pareto_front(points: &[Vec<f64>], directions: &[Direction]) -> Vec<usize> {
    let key = |i: usize| -> Vec<f64> {
        points[i]
            .iter()
            .zip(directions)
            .map(|(&v, d)| match d {
                Direction::Maximize => -v,
                Direction::Minimize => v,
            })
            .collect()
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i], directions)) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}
