//! Bundled configurations reproducing the paper's figures.

pub const PRESETS: [(&str, &str); 5] = [
    ("fig1", include_str!("../../figures/fig1.cfg")),
    ("fig2", include_str!("../../figures/fig2.cfg")),
    ("fig3", include_str!("../../figures/fig3.cfg")),
    ("fig4", include_str!("../../figures/fig4.cfg")),
    ("fig5", include_str!("../../figures/fig5.cfg")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
