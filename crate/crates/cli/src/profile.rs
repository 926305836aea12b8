//! Static report sections describing the driving application, shared
//! by the experiment runners.

use chainsim::reports::{
    ApplicationProfile, DeviceEnvironment, RuntimeRequirements, TargetQosProfile,
    UserPerceivedQuality,
};

pub fn application_profile() -> ApplicationProfile {
    ApplicationProfile {
        app_type: "interactive holographic streaming".into(),
        qos_metrics: vec!["latency".into(), "loss".into(), "throughput".into()],
        qoe_metrics: vec!["smoothness".into(), "control responsiveness".into()],
        target_qos: TargetQosProfile {
            max_latency_ms: 100.0,
            min_throughput_bps: 1e6,
            max_loss_ratio: 0.01,
            max_jitter_ms: 30.0,
        },
    }
}

pub fn device_environment() -> DeviceEnvironment {
    DeviceEnvironment {
        network_technology: "wifi".into(),
        mobility: "static".into(),
        device: "headset".into(),
        os: "linux".into(),
        competing_flows: 1,
    }
}

pub fn perceived_quality(text: &str, score: f64) -> UserPerceivedQuality {
    UserPerceivedQuality {
        text: text.into(),
        score,
    }
}

pub fn runtime_requirements() -> RuntimeRequirements {
    RuntimeRequirements {
        priorities: vec![
            "guaranteed delivery for control messages".into(),
            "low latency for media frames".into(),
        ],
        guidance: "media frames tolerate loss; control messages do not".into(),
    }
}
