//! Central finite differences against analytic gradients.

use factqg_core::nn::{GradBuffer, ParamId, ParamStore};

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

#[derive(Debug, Default)]
pub struct Report {
    pub checked: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }

    pub fn merge(&mut self, other: Report) {
        self.checked += other.checked;
        self.worst = self.worst.max(other.worst);
        self.failures.extend(other.failures);
    }
}

/// Relative error, with an absolute floor for entries that are both ~0.
pub fn compare(label: &str, analytic: f64, numeric: f64, report: &mut Report) {
    report.checked += 1;
    let scale = analytic.abs().max(numeric.abs());
    let err = if scale < 1e-7 {
        if (analytic - numeric).abs() > 1e-8 {
            report
                .failures
                .push(format!("{label}: analytic {analytic:e} numeric {numeric:e}"));
        }
        0.0
    } else {
        (analytic - numeric).abs() / scale
    };
    report.worst = report.worst.max(err);
    if err >= TOL {
        report
            .failures
            .push(format!("{label}: analytic {analytic:e} numeric {numeric:e} rel {err:e}"));
    }
}

/// Checks every trainable parameter entry in `store`.
pub fn check_params<F>(store: &mut ParamStore, grads: &GradBuffer, mut loss: F) -> Report
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut report = Report::default();
    for pid in 0..store.len() {
        let id = ParamId(pid);
        if !store.get(id).trainable {
            continue;
        }
        let name = store.get(id).name.clone();
        for k in 0..store.get(id).value.len() {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + EPS;
            let up = loss(store);
            store.get_mut(id).value.data_mut()[k] = orig - EPS;
            let down = loss(store);
            store.get_mut(id).value.data_mut()[k] = orig;
            compare(
                &format!("{name}[{k}]"),
                grads.get(id)[k],
                (up - down) / (2.0 * EPS),
                &mut report,
            );
        }
    }
    report
}

/// Checks the gradient of `loss` with respect to a plain input vector.
pub fn check_input<F>(label: &str, x: &mut Vec<f64>, analytic: &[f64], mut loss: F) -> Report
where
    F: FnMut(&[f64]) -> f64,
{
    let mut report = Report::default();
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + EPS;
        let up = loss(x);
        x[k] = orig - EPS;
        let down = loss(x);
        x[k] = orig;
        compare(&format!("{label}[{k}]"), analytic[k], (up - down) / (2.0 * EPS), &mut report);
    }
    report
}
