//! Shared fixtures for the workbench benchmarks.

use gca_cli::{LoadedModel, ModelFile};
use gca_core::{GCASystem, Pattern, Value, ValueDomain};

/// The classic instantiate-send-receive ring pattern.
pub fn ring_system(n: usize) -> GCASystem {
    let mut pattern = Pattern::new(
        n,
        vec!["a".to_string(), "b".to_string()],
        vec!["e".to_string()],
    )
    .expect("valid pattern");
    pattern.push_action("a[x] <- e + x").expect("action");
    pattern.push_action("send(a[x])").expect("action");
    pattern.push_action("receive(a)").expect("action");
    pattern.push_action("b[x] <- a[x+1]").expect("action");
    let mut system = GCASystem::new(pattern, 10.0).expect("valid system");
    system.domains = vec![ValueDomain::bounded(-50, 50).expect("bounds"); 2];
    system.env_domains = vec![ValueDomain::bounded(-50, 50).expect("bounds")];
    system.initial_values = vec![Value::Int(0); 2];
    system.initial_env = vec![Value::Int(10)];
    system
}

/// The bundled faulty balanced-rod controller.
pub fn balanced_rod_faulty() -> LoadedModel {
    let text = include_str!("../../cli/models/balanced_rod_faulty.toml");
    ModelFile::parse(text)
        .expect("bundled model parses")
        .resolve("balanced-rod-faulty")
        .expect("bundled model resolves")
}
