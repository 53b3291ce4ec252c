use std::fmt::Write;

use super::{InteractionProtocol, MessageStep, Mode, PrimitiveMessage, RoleKind};

/// Renders the canonical document text for `ip`.
///
/// Sections are always written in the order roles, vars, messages, flow,
/// order, so `serialize(parse(serialize(ip))) == serialize(ip)`.
pub fn serialize_protocol(ip: &InteractionProtocol) -> String {
    let mut out = String::new();
    writeln!(out, "protocol {}", ip.id).unwrap();

    out.push_str("\nroles {\n");
    for role in &ip.roles {
        match role.kind {
            RoleKind::PrivateProcess => writeln!(out, "    {}: process", role.name).unwrap(),
            RoleKind::WebService if role.capabilities.is_empty() => {
                writeln!(out, "    {}: service", role.name).unwrap()
            }
            RoleKind::WebService => {
                let caps: Vec<&str> = role.capabilities.iter().map(String::as_str).collect();
                writeln!(out, "    {}: service({})", role.name, caps.join(", ")).unwrap()
            }
        }
    }
    out.push_str("}\n");

    if !ip.vars.is_empty() {
        out.push_str("\nvars {\n");
        for v in &ip.vars {
            match &v.default {
                Some(d) => writeln!(out, "    {}: {} = {}", v.name, v.ty.keyword(), d).unwrap(),
                None => writeln!(out, "    {}: {}", v.name, v.ty.keyword()).unwrap(),
            }
        }
        out.push_str("}\n");
    }

    out.push_str("\nmessages {\n");
    for step in &ip.messages {
        match step {
            MessageStep::Primitive(pm) => write_pm(&mut out, pm, 1),
            MessageStep::Complex(cm) => {
                writeln!(out, "    cm {} {} {{", cm.name, cm.operator).unwrap();
                for b in &cm.branches {
                    write_pm(&mut out, b, 2);
                }
                out.push_str("    }\n");
            }
        }
    }
    out.push_str("}\n");

    out.push_str("\nflow {\n");
    for (a, b) in &ip.flow {
        writeln!(out, "    ({a}, {b})").unwrap();
    }
    out.push_str("}\n");

    if !ip.orders.is_empty() {
        out.push_str("\norder {\n");
        for (role, steps) in &ip.orders {
            writeln!(out, "    {role}: {}", steps.join(", ")).unwrap();
        }
        out.push_str("}\n");
    }
    out
}

fn write_pm(out: &mut String, pm: &PrimitiveMessage, depth: usize) {
    let indent = "    ".repeat(depth);
    let mode = match pm.option.mode {
        Mode::Synchronous => "sync",
        Mode::Asynchronous => "async",
    };
    write!(
        out,
        "{indent}pm {}: {} -> {} {} {mode}",
        pm.name, pm.sender, pm.receiver, pm.act
    )
    .unwrap();
    if let Some(g) = &pm.option.guard {
        write!(out, " guard {g}").unwrap();
    }
    if let Some(d) = pm.option.deadline {
        write!(out, " deadline {d}").unwrap();
    }
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use crate::protocol::{parse_protocol, serialize_protocol};

    #[test]
    fn minimal_round_trip() {
        let ip = parse_protocol(
            "protocol p roles { I: process E: process } messages { pm m1: I -> E request }",
        )
        .unwrap();
        let text = serialize_protocol(&ip);
        assert_eq!(parse_protocol(&text).unwrap(), ip);
        assert_eq!(
            text,
            "protocol p\n\nroles {\n    I: process\n    E: process\n}\n\nmessages {\n    pm m1: I -> E request async\n}\n\nflow {\n    (I, E)\n}\n"
        );
    }

    #[test]
    fn all_operators_round_trip_and_are_byte_stable() {
        let src = r#"protocol ops
            roles { I: process A: process S: service(ship) }
            vars { n: int = 3 tag: str = "q\"x" b: bool }
            messages {
                cm a AND { pm a1: I -> A cfp sync  pm a2: I -> S request }
                cm o OR { pm o1: A -> I propose guard n > 1 or not b = true  pm o2: A -> I inform deadline 9 }
                cm x XOR { pm x1: I -> A accept-proposal  pm x2: I -> A reject-proposal guard false }
            }
            order { A: a, o, x }"#;
        let ip = parse_protocol(src).unwrap();
        let once = serialize_protocol(&ip);
        let reparsed = parse_protocol(&once).unwrap();
        assert_eq!(reparsed, ip);
        assert_eq!(serialize_protocol(&reparsed), once);
    }
}
