//! Step-size adaptation by stochastic-approximation doubling/halving on
//! windowed acceptance rates. Adaptation runs during burn-in only and the
//! step size is frozen afterwards, preserving chain invariance.

/// Windowed acceptance controller for a single step size.
#[derive(Debug, Clone)]
pub struct StepSizeController {
    eps: f64,
    band: (f64, f64),
    window: usize,
    accepts: usize,
    count: usize,
    adjustments: usize,
    gain: f64,
    adapting: bool,
    entered_band: bool,
    warning: Option<String>,
}

const INITIAL_GAIN: f64 = 2.0;
const GAIN_DECAY: f64 = 0.85;
const MIN_GAIN: f64 = 1.05;

impl StepSizeController {
    pub fn new(eps0: f64, band: (f64, f64), window: usize) -> Self {
        assert!(
            0.0 < band.0 && band.0 < band.1 && band.1 < 1.0,
            "acceptance band must satisfy 0 < lo < hi < 1"
        );
        assert!(eps0 > 0.0 && window > 0);
        Self {
            eps: eps0,
            band,
            window,
            accepts: 0,
            count: 0,
            adjustments: 0,
            gain: INITIAL_GAIN,
            adapting: true,
            entered_band: false,
            warning: None,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn entered_band(&self) -> bool {
        self.entered_band
    }

    /// Enables or disables adaptation. Disabling freezes the step size and
    /// records a warning when the band was never reached.
    pub fn set_adapting(&mut self, on: bool) {
        if !on && self.adapting && !self.entered_band && self.adjustments > 0 {
            self.warning = Some(format!(
                "step size never entered acceptance band [{}, {}]; keeping eps = {:.3e}",
                self.band.0, self.band.1, self.eps
            ));
        }
        self.adapting = on;
        self.accepts = 0;
        self.count = 0;
    }

    /// Records one accept/reject outcome; applies a window adjustment when
    /// the window fills.
    pub fn observe(&mut self, accepted: bool) {
        if !self.adapting {
            return;
        }
        self.count += 1;
        self.accepts += usize::from(accepted);
        if self.count == self.window {
            let rate = self.accepts as f64 / self.count as f64;
            self.adjust_once(rate);
            self.count = 0;
            self.accepts = 0;
        }
    }

    /// One doubling/halving move from an acceptance rate, with decaying gain.
    pub fn adjust_once(&mut self, rate: f64) {
        if !rate.is_finite() {
            return;
        }
        self.adjustments += 1;
        if rate > self.band.1 {
            self.eps *= self.gain;
        } else if rate < self.band.0 {
            self.eps /= self.gain;
        } else {
            self.entered_band = true;
        }
        self.gain = (self.gain.powf(GAIN_DECAY)).max(MIN_GAIN);
    }
}

/// Runs `burn_in` iterations of `kernel_step(eps) -> accepted` with windowed
/// adaptation toward `band`, freezing and returning the final step size and
/// an optional miss warning.
pub fn tune_epsilon<F>(
    mut kernel_step: F,
    band: (f64, f64),
    eps0: f64,
    burn_in: usize,
    window: usize,
) -> (f64, Option<String>)
where
    F: FnMut(f64) -> bool,
{
    let mut ctrl = StepSizeController::new(eps0, band, window);
    for _ in 0..burn_in {
        let accepted = kernel_step(ctrl.eps());
        ctrl.observe(accepted);
    }
    ctrl.set_adapting(false);
    (ctrl.eps(), ctrl.warning.clone())
}
