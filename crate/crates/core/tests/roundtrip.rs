use certcal::ot::{cost_matrix, policy_from_plan, solve_unbalanced, OtConfig, PolicyMode};
use certcal::reporting::{
    export_diagram, export_policy, export_transport, import_diagram, import_policy, import_transport, DiagramSpec,
    ExportFormat,
};
use certcal::synth::generate;
use certcal::{measure, AgentSpec, BinGrid, BootstrapConfig, CertaintyLexicon, ConfidenceDistribution, OutcomeRule};

fn agent() -> AgentSpec<f64> {
    let lex = CertaintyLexicon::from_pairs([
        ("Unlikely", ConfidenceDistribution::Beta { alpha: 2.0, beta: 8.0 }),
        ("Maybe", ConfidenceDistribution::Beta { alpha: 5.0, beta: 5.0 }),
        ("Likely", ConfidenceDistribution::Beta { alpha: 8.0, beta: 2.0 }),
    ])
    .unwrap();
    AgentSpec::uniform(lex, OutcomeRule::Biased { shift: -0.2 }).unwrap()
}

#[test]
fn report_and_plan_survive_json() {
    let spec = agent();
    let records = generate(&spec, 2_000, 9).unwrap();
    let grid = BinGrid::equal_width(20).unwrap();
    let report = measure(&records, &spec.lexicon, None, &grid, BootstrapConfig { resamples: 30, seed: 1 }).unwrap();
    let diagram = DiagramSpec::new(report, None).unwrap();
    let bytes = export_diagram(&diagram, ExportFormat::Json).unwrap();
    assert_eq!(import_diagram::<f64>(&bytes).unwrap(), diagram);

    let cost = cost_matrix(&records, &spec.lexicon, &spec.lexicon, None, &grid).unwrap();
    let config = OtConfig::default();
    let plan = solve_unbalanced(&cost, &config).unwrap();
    let policy = policy_from_plan(&plan, &cost, &spec.lexicon, &spec.lexicon, PolicyMode::Argmax).unwrap();
    let bytes = export_transport(&cost, &plan, &policy, &config, ExportFormat::Json).unwrap();
    let back = import_transport::<f64>(&bytes).unwrap();
    assert_eq!(back.plan, plan.values);
    assert_eq!(back.cost, cost.values);
    assert_eq!(import_policy::<f64>(&export_policy(&policy).unwrap()).unwrap(), policy);
}

#[test]
fn overconfident_agent_is_moved_down() {
    let spec = agent();
    let records = generate(&spec, 5_000, 3).unwrap();
    let grid = BinGrid::equal_width(100).unwrap();
    let cost = cost_matrix(&records, &spec.lexicon, &spec.lexicon, None, &grid).unwrap();
    let plan = solve_unbalanced(&cost, &OtConfig::default()).unwrap();
    assert!(plan.converged);
    let policy = policy_from_plan(&plan, &cost, &spec.lexicon, &spec.lexicon, PolicyMode::Argmax).unwrap();
    // "Likely" is used for outcomes that happen about 60% of the time
    assert!(policy.argmax_target(2) < 2);
}
