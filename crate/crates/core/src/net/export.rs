//! PNML and Graphviz renderings of a net.
//!
//! PNML follows the place/transition net type; colors, place kinds, phases
//! and guards ride along in `toolspecific` elements.

use std::fmt::Write;
use std::str::FromStr;

use super::{Arc, ColorDomain, ColoredPetriNet, PlaceKind};

pub const TOOL_NAME: &str = "iproto";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Pnml,
    Dot,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Pnml => "pnml",
            ExportFormat::Dot => "dot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown export format `{0}` (expected pnml or dot)")]
pub struct UnknownFormat(pub String);

impl FromStr for ExportFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pnml" => Ok(ExportFormat::Pnml),
            "dot" => Ok(ExportFormat::Dot),
            _ => Err(UnknownFormat(s.to_string())),
        }
    }
}

pub fn export_net(net: &ColoredPetriNet, format: ExportFormat) -> String {
    match format {
        ExportFormat::Pnml => pnml(net),
        ExportFormat::Dot => dot(net),
    }
}

pub(crate) fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn kind_str(kind: PlaceKind) -> &'static str {
    match kind {
        PlaceKind::RoleState => "role-state",
        PlaceKind::MessageBuffer => "message-buffer",
        PlaceKind::Control => "control",
    }
}

fn pnml(net: &ColoredPetriNet) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<pnml xmlns=\"http://www.pnml.org/version-2009/grammar/pnml\">\n");
    writeln!(
        out,
        "  <net id=\"{}\" type=\"http://www.pnml.org/version-2009/grammar/ptnet\">",
        xml_escape(&net.name)
    )
    .unwrap();
    writeln!(
        out,
        "    <name><text>{}</text></name>",
        xml_escape(&net.name)
    )
    .unwrap();
    writeln!(
        out,
        "    <toolspecific tool=\"{TOOL_NAME}\" version=\"{}\">",
        env!("CARGO_PKG_VERSION")
    )
    .unwrap();
    for (i, b) in net.bindings.iter().enumerate() {
        writeln!(out, "      <color id=\"c{}\">", i + 1).unwrap();
        for (k, v) in b {
            writeln!(
                out,
                "        <binding var=\"{}\">{}</binding>",
                xml_escape(k),
                xml_escape(&v.to_string())
            )
            .unwrap();
        }
        out.push_str("      </color>\n");
    }
    for f in &net.finals {
        out.push_str("      <final>");
        let parts: Vec<String> = f
            .place_counts()
            .iter()
            .map(|(p, n)| format!("{p}:{n}"))
            .collect();
        out.push_str(&parts.join(" "));
        out.push_str("</final>\n");
    }
    out.push_str("    </toolspecific>\n");
    out.push_str("    <page id=\"page0\">\n");

    for p in &net.places {
        writeln!(out, "      <place id=\"{}\">", p.id).unwrap();
        writeln!(
            out,
            "        <name><text>{}</text></name>",
            xml_escape(&p.name)
        )
        .unwrap();
        let tokens = net.initial.count(p.id);
        if tokens > 0 {
            writeln!(
                out,
                "        <initialMarking><text>{tokens}</text></initialMarking>"
            )
            .unwrap();
        }
        write!(
            out,
            "        <toolspecific tool=\"{TOOL_NAME}\" version=\"{}\">",
            env!("CARGO_PKG_VERSION")
        )
        .unwrap();
        write!(out, "<kind>{}</kind>", kind_str(p.kind)).unwrap();
        if let Some(owner) = &p.owner {
            write!(out, "<owner>{}</owner>", xml_escape(owner)).unwrap();
        }
        let domain = match p.domain {
            ColorDomain::Unit => "unit",
            ColorDomain::Binding => "binding",
        };
        write!(out, "<domain>{domain}</domain>").unwrap();
        for (c, n) in net.initial.colors_at(p.id) {
            write!(out, "<token color=\"c{}\">{n}</token>", c.0).unwrap();
        }
        out.push_str("</toolspecific>\n");
        out.push_str("      </place>\n");
    }

    for t in &net.transitions {
        writeln!(out, "      <transition id=\"{}\">", t.id).unwrap();
        writeln!(
            out,
            "        <name><text>{}</text></name>",
            xml_escape(&t.name)
        )
        .unwrap();
        write!(
            out,
            "        <toolspecific tool=\"{TOOL_NAME}\" version=\"{}\">",
            env!("CARGO_PKG_VERSION")
        )
        .unwrap();
        write!(
            out,
            "<message>{}</message><phase>{}</phase>",
            xml_escape(&t.label.message),
            t.label.phase.as_str()
        )
        .unwrap();
        if let Some(c) = &t.label.complex {
            write!(out, "<complex>{}</complex>", xml_escape(c)).unwrap();
        }
        if let Some(g) = &t.guard {
            write!(out, "<guard>{}</guard>", xml_escape(&g.to_string())).unwrap();
        }
        out.push_str("</toolspecific>\n");
        out.push_str("      </transition>\n");
    }

    for (i, arc) in net.arcs().enumerate() {
        let (source, target, weight) = match arc {
            Arc::Input {
                place,
                transition,
                weight,
            } => (place.to_string(), transition.to_string(), weight),
            Arc::Output {
                transition,
                place,
                weight,
            } => (transition.to_string(), place.to_string(), weight),
        };
        writeln!(
            out,
            "      <arc id=\"a{i}\" source=\"{source}\" target=\"{target}\">"
        )
        .unwrap();
        writeln!(
            out,
            "        <inscription><text>{weight}</text></inscription>"
        )
        .unwrap();
        out.push_str("      </arc>\n");
    }

    out.push_str("    </page>\n  </net>\n</pnml>\n");
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn dot(net: &ColoredPetriNet) -> String {
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", dot_escape(&net.name)).unwrap();
    out.push_str("  rankdir=LR;\n");
    for p in &net.places {
        let tokens = net.initial.count(p.id);
        let label = if tokens > 0 {
            format!("{}\\n{tokens}", dot_escape(&p.name))
        } else {
            dot_escape(&p.name)
        };
        writeln!(out, "  {} [shape=circle, label=\"{label}\"];", p.id).unwrap();
    }
    for t in &net.transitions {
        let label = match &t.guard {
            Some(g) => format!("{}\\n[{}]", dot_escape(&t.name), dot_escape(&g.to_string())),
            None => dot_escape(&t.name),
        };
        writeln!(out, "  {} [shape=box, label=\"{label}\"];", t.id).unwrap();
    }
    for arc in net.arcs() {
        match arc {
            Arc::Input {
                place,
                transition,
                weight,
            } => writeln!(out, "  {place} -> {transition} [label=\"{weight}\"];").unwrap(),
            Arc::Output {
                transition,
                place,
                weight,
            } => writeln!(out, "  {transition} -> {place} [label=\"{weight}\"];").unwrap(),
        }
    }
    out.push_str("}\n");
    out
}
