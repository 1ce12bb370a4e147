use std::fmt::Write;

use crate::model::{HabitatDecl, ModelSpec};

/// Canonical text for a model; parsing it back yields a structurally equal spec.
pub fn render(spec: &ModelSpec) -> String {
    let mut out = String::new();
    for sp in &spec.species {
        let _ = writeln!(out, "species {} {{", sp.name);
        for p in &sp.params {
            let _ = writeln!(out, "    param {} = {};", p.name, p.value);
        }
        for p in &sp.processes {
            let _ = writeln!(out, "    process {} = {};", p.name, p.term);
        }
        out.push_str("}\n\n");
    }
    match &spec.habitat {
        Some((HabitatDecl::Ring(n), _)) => {
            let _ = writeln!(out, "habitat ring({n});\n");
        }
        Some((HabitatDecl::Graph { nodes, edges }, _)) => {
            out.push_str("habitat graph {\n");
            let _ = writeln!(out, "    nodes {{ {} }}", nodes.join(", "));
            let edges: Vec<String> = edges.iter().map(|(a, b)| format!("{a} - {b}")).collect();
            let _ = writeln!(out, "    edges {{ {} }}", edges.join(", "));
            out.push_str("}\n\n");
        }
        None => {}
    }
    out.push_str("system {\n");
    for e in &spec.system.entries {
        let _ = write!(out, "    {} @ {} * {}", e.term, e.location, e.count);
        if let Some(sp) = &e.species {
            let _ = write!(out, " of {sp}");
        }
        out.push_str(";\n");
    }
    out.push('}');
    if !spec.system.restrict.is_empty() {
        let _ = write!(out, " restrict {{ {} }}", spec.system.restrict.join(", "));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    #[test]
    fn nil_only_species_renders_minimally() {
        let spec = parse("species a { process Z = 0; }").unwrap();
        let text = render(&spec);
        assert_eq!(text, "species a {\n    process Z = 0;\n}\n\nsystem {\n}\n");
        assert_eq!(parse(&text).unwrap(), spec);
    }

    #[test]
    fn round_trips_a_graph_model() {
        let src = "
            species m { param s = 0.3; process W = infect ? (tick . W, pchoice over neighbors { go it . W }); }
            species h { process S = out infect ? (0, tick . S); }
            habitat graph { nodes { a, b, 3 } edges { a - b, b - 3 } }
            system { W @ a * 10; S @ 3 * 5 of h; } restrict { infect }
        ";
        let spec = parse(src).unwrap();
        let text = render(&spec);
        assert_eq!(parse(&text).unwrap(), spec);
        assert_eq!(render(&parse(&text).unwrap()), text);
    }
}
