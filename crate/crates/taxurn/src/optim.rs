//! Derivative-free simplex minimization in two dimensions.
//!
//! A small Nelder-Mead implementation used to fit the per-level urn
//! parameters. The objective is smooth but its gradient is awkward to write
//! down (log-gamma differences), so a simplex search with multiple starts is
//! both simple and reliable at this dimensionality.

/// Minimizes `f` over R^2 starting at `x0`, returning the best point and its
/// value. Standard Nelder-Mead coefficients (reflect 1, expand 2, contract
/// 0.5, shrink 0.5); stops when the simplex collapses or after `max_iter`.
pub fn nelder_mead_2d<F>(f: F, x0: [f64; 2], step: f64, max_iter: usize) -> ([f64; 2], f64)
where
    F: Fn([f64; 2]) -> f64,
{
    let mut simplex = [
        x0,
        [x0[0] + step, x0[1]],
        [x0[0], x0[1] + step],
    ];
    let mut values = simplex.map(&f);

    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, mid, worst) = (order[0], order[1], order[2]);

        let spread = values[worst] - values[best];
        let diam = simplex
            .iter()
            .map(|p| {
                (p[0] - simplex[best][0]).abs() + (p[1] - simplex[best][1]).abs()
            })
            .fold(0.0_f64, f64::max);
        if spread.abs() <= 1e-11 * (1.0 + values[best].abs()) && diam < 1e-9 {
            break;
        }

        let centroid = [
            (simplex[best][0] + simplex[mid][0]) / 2.0,
            (simplex[best][1] + simplex[mid][1]) / 2.0,
        ];
        let reflect = [
            centroid[0] + (centroid[0] - simplex[worst][0]),
            centroid[1] + (centroid[1] - simplex[worst][1]),
        ];
        let f_reflect = f(reflect);

        if f_reflect < values[best] {
            let expand = [
                centroid[0] + 2.0 * (centroid[0] - simplex[worst][0]),
                centroid[1] + 2.0 * (centroid[1] - simplex[worst][1]),
            ];
            let f_expand = f(expand);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            }
        } else if f_reflect < values[mid] {
            simplex[worst] = reflect;
            values[worst] = f_reflect;
        } else {
            let toward = if f_reflect < values[worst] {
                reflect
            } else {
                simplex[worst]
            };
            let contract = [
                centroid[0] + 0.5 * (toward[0] - centroid[0]),
                centroid[1] + 0.5 * (toward[1] - centroid[1]),
            ];
            let f_contract = f(contract);
            if f_contract < values[worst].min(f_reflect) {
                simplex[worst] = contract;
                values[worst] = f_contract;
            } else {
                for i in [mid, worst] {
                    simplex[i] = [
                        (simplex[i][0] + simplex[best][0]) / 2.0,
                        (simplex[i][1] + simplex[best][1]) / 2.0,
                    ];
                    values[i] = f(simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..3 {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best], values[best])
}
