//! Multi-day resource-allocation simulation: Poisson request arrivals
//! embedded under the current objective weights, 24 h accounting
//! windows, and a weight evaluation after each closed window. A static
//! profit-only control run skips the reasoner entirely.

use chainsim::agents::{ra_agent_evaluate, render_weights, DecisionLog, Reasoner};
use chainsim::allocator::{
    AllocatorConfig, AllocatorState, Infrastructure, MetricsWindow, MinuteSample,
    ObjectiveWeights, RateSchedule, RequestProfile,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::RaConfig;
use crate::CliError;

#[derive(Debug)]
pub struct RaResults {
    pub minutes: Vec<MinuteSample>,
    pub windows: Vec<MetricsWindow>,
    /// Weights in force during each window, in window order.
    pub weights_by_window: Vec<[f64; 4]>,
    pub minutes_csv: String,
    pub windows_json: String,
    pub decision_log_text: String,
}

impl RaResults {
    pub fn output_files(&self) -> Vec<(String, String)> {
        vec![
            ("ra_minutes.csv".to_string(), self.minutes_csv.clone()),
            ("ra_windows.json".to_string(), self.windows_json.clone()),
            ("decisions.log".to_string(), self.decision_log_text.clone()),
        ]
    }

    /// Sum of a per-minute series over minutes `[from_min, to_min)`.
    pub fn sum_over(&self, from_min: u64, to_min: u64, f: impl Fn(&MinuteSample) -> f64) -> f64 {
        self.minutes
            .iter()
            .filter(|m| m.minute >= from_min && m.minute < to_min)
            .map(f)
            .sum()
    }
}

fn minutes_csv(minutes: &[MinuteSample]) -> String {
    let mut out = String::from(
        "minute,arrival_rate_per_min,arrivals,accepted,cost_per_min,revenue_per_min,\
         green_per_min,profit_per_min,utilization,fairness\n",
    );
    for m in minutes {
        out.push_str(&format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            m.minute,
            m.arrival_rate_per_min,
            m.arrivals,
            m.accepted,
            m.cost_per_min,
            m.revenue_per_min,
            m.green_per_min,
            m.profit_per_min,
            m.utilization,
            m.fairness
        ));
    }
    out
}

/// Run the simulation. `reasoner` is consulted after every closed 24 h
/// window except the last; pass `None` (or set `static_control`) to
/// keep the initial weights throughout.
pub fn run_ra_sim(
    cfg: &RaConfig,
    seed: u64,
    mut reasoner: Option<&mut dyn Reasoner>,
) -> Result<RaResults, CliError> {
    if cfg.hours == 0 || cfg.hours % 24 != 0 {
        return Err(CliError::Config(format!(
            "hours={} must be a positive multiple of 24",
            cfg.hours
        )));
    }
    let [a1, a2, a3, a4] = cfg.initial_weights;
    let weights = ObjectiveWeights::new(a1, a2, a3, a4)?;
    let infra = Infrastructure::default_scenario(seed);
    let alloc_cfg = AllocatorConfig {
        k_paths: cfg.k_paths,
        request: RequestProfile {
            nf_min: cfg.nf_min,
            nf_max: cfg.nf_max,
            lifetime_mean_s: cfg.lifetime_mean_s,
            ..RequestProfile::default()
        },
        schedule: RateSchedule {
            base_per_min: cfg.base_rate_per_min,
            double_at_min: cfg.double_at_hours.map(|h| h * 60),
        },
    };
    let mut state = AllocatorState::new(infra, alloc_cfg, weights);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut log = DecisionLog::default();
    let mut windows = Vec::new();
    let mut weights_by_window = Vec::new();

    let n_windows = cfg.hours / 24;
    for w in 0..n_windows {
        weights_by_window.push(state.weights.as_array());
        state.advance_minutes(24 * 60, &mut rng)?;
        let window = state.metrics_window()?;
        windows.push(window.clone());
        if w + 1 < n_windows {
            let now_us = state.minute() * 60 * 1_000_000;
            if cfg.static_control || reasoner.is_none() {
                log.append(
                    now_us,
                    "ra-agent",
                    &format!("weights {} (static control)", render_weights(&state.weights)),
                    "",
                );
            } else if let Some(r) = reasoner.as_deref_mut() {
                state.weights = ra_agent_evaluate(&window, state.weights, r, now_us, &mut log);
            }
        }
    }

    let minutes = state.samples().to_vec();
    Ok(RaResults {
        minutes_csv: minutes_csv(&minutes),
        windows_json: serde_json::to_string_pretty(&windows).expect("windows serialize"),
        minutes,
        windows,
        weights_by_window,
        decision_log_text: log.render(),
    })
}
