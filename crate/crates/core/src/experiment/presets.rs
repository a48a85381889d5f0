use super::{config_err, ExperimentConfig, ExperimentError};

pub const PRESET_NAMES: [&str; 6] = ["fig2", "fig4", "fig5", "fig6", "flocking", "trapping"];

/// Raw JSON of an embedded preset.
pub fn preset_json(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2" => include_str!("../../presets/fig2.json"),
        "fig4" => include_str!("../../presets/fig4.json"),
        "fig5" => include_str!("../../presets/fig5.json"),
        "fig6" => include_str!("../../presets/fig6.json"),
        "flocking" => include_str!("../../presets/flocking.json"),
        "trapping" => include_str!("../../presets/trapping.json"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let text = preset_json(name).ok_or_else(|| {
        config_err(format!(
            "unknown preset `{name}` (available: {})",
            PRESET_NAMES.join(", ")
        ))
    })?;
    ExperimentConfig::from_json(text)
}
