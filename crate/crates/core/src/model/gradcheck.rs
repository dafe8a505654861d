use super::graph::{Graph, ParamSet, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub n_checked: usize,
}

/// Compare backprop gradients with central finite differences for every
/// scalar parameter. Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check<F>(params: &ParamSet, h: f64, floor: f64, loss: F) -> GradCheckReport
where
    F: Fn(&mut Graph) -> Var,
{
    let analytic = {
        let mut g = Graph::new(params);
        let l = loss(&mut g);
        g.backward(l)
    };
    let eval = |ps: &ParamSet| {
        let mut g = Graph::new(ps);
        let l = loss(&mut g);
        g.scalar(l)
    };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        n_checked: 0,
    };
    for p in 0..params.len() {
        for idx in 0..params.values[p].len() {
            let orig = params.values[p].as_slice().expect("standard layout")[idx];
            work.values[p].as_slice_mut().expect("standard layout")[idx] = orig + h;
            let up = eval(&work);
            work.values[p].as_slice_mut().expect("standard layout")[idx] = orig - h;
            let down = eval(&work);
            work.values[p].as_slice_mut().expect("standard layout")[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[p].as_slice().expect("standard layout")[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.n_checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{}[{idx}]: backprop {a:e}, numeric {numeric:e}", params.names[p]);
            }
        }
    }
    report
}
