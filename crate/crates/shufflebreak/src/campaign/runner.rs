//! Parallel campaign execution.

use super::DatasetManifest;
use crate::engine::{attack, AttackConfig, AttackContext, AttackTrace};
use futures::stream::{self, StreamExt};

/// Attacks every instruction in the manifest with bounded parallelism.
///
/// Traces come back in manifest order regardless of completion order, one
/// per instruction. Per-instruction failures are embedded in their traces;
/// only configuration errors abort ahead of time.
pub async fn run_campaign(
    manifest: &DatasetManifest,
    ctx: &AttackContext,
    config: &AttackConfig,
    parallelism: usize,
) -> Result<Vec<AttackTrace>, crate::engine::ConfigError> {
    config.validate()?;
    let parallelism = parallelism.max(1);
    let mut slots: Vec<Option<AttackTrace>> = Vec::new();
    slots.resize_with(manifest.entries.len(), || None);

    let mut results = stream::iter(manifest.entries.iter().enumerate())
        .map(|(index, instr)| async move {
            let trace = attack(instr, ctx, config).await;
            if let Some(archive) = &ctx.archive {
                if let Err(e) = archive.write_trace(&trace) {
                    tracing::warn!(id = instr.id, %e, "failed to archive trace");
                }
            }
            (index, trace)
        })
        .buffer_unordered(parallelism);

    while let Some((index, trace)) = results.next().await {
        if let Some(err) = &trace.error {
            tracing::warn!(
                id = trace.instruction_id,
                kind = ?err.kind,
                message = err.message,
                "instruction failed"
            );
        }
        slots[index] = Some(trace);
    }
    Ok(slots
        .into_iter()
        .map(|t| t.expect("every instruction produces a trace"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::{aggregate, Instruction};
    use super::*;
    use crate::gateway::{
        EndpointConfig, MockModelScript, ModelClient, RuleMatch, ScriptAction, ScriptRule,
        ScriptedBackend,
    };
    use crate::judge::{Judge, JudgePromptTemplate};
    use crate::text::TextTools;
    use std::sync::Arc;

    fn manifest(n: usize) -> DatasetManifest {
        DatasetManifest {
            name: "unit".to_string(),
            source: "test".to_string(),
            entries: (0..n)
                .map(|i| Instruction {
                    id: format!("item-{i}"),
                    category: format!("cat-{}", i % 2),
                    text: "about access acid against".into(),
                    image_path: None,
                    protected_region: None,
                })
                .collect(),
        }
    }

    fn ctx_with_target(script: MockModelScript) -> AttackContext {
        let target = Arc::new(ModelClient::new(
            Arc::new(ScriptedBackend::new("target", script)),
            &EndpointConfig {
                max_concurrency: 16,
                ..Default::default()
            },
        ));
        let judge_client = ModelClient::new(
            Arc::new(ScriptedBackend::new(
                "judge",
                MockModelScript::keyword("Sure", "5", "1"),
            )),
            &EndpointConfig {
                max_concurrency: 16,
                ..Default::default()
            },
        );
        AttackContext {
            target,
            judge: Arc::new(Judge::new(judge_client, JudgePromptTemplate::builtin())),
            scorer: None,
            tools: TextTools::builtin(),
            archive: None,
        }
    }

    #[tokio::test]
    async fn one_trace_per_instruction_in_manifest_order() {
        let ctx = ctx_with_target(MockModelScript::constant("Sure, step one"));
        let config = AttackConfig::default();
        let traces = run_campaign(&manifest(10), &ctx, &config, 4).await.unwrap();
        assert_eq!(traces.len(), 10);
        for (i, t) in traces.iter().enumerate() {
            assert_eq!(t.instruction_id, format!("item-{i}"));
            assert!(t.success);
        }
    }

    #[tokio::test]
    async fn one_failing_instruction_leaves_the_other_nine_complete() {
        // The target fails permanently for one instruction's text marker.
        // The marker is a single word so shuffling cannot break the match.
        let entries_script = vec![
            ScriptRule {
                when: RuleMatch::Contains("poisonpill".to_string()),
                action: ScriptAction::FailProtocol,
            },
            ScriptRule {
                when: RuleMatch::Always,
                action: ScriptAction::Reply("Sure, done".to_string()),
            },
        ];
        let ctx = ctx_with_target(MockModelScript::new(entries_script));
        let mut m = manifest(10);
        m.entries[3].text = "this one is the poisonpill marker".into();
        let config = AttackConfig::default();
        let traces = run_campaign(&m, &ctx, &config, 4).await.unwrap();
        assert_eq!(traces.len(), 10);
        assert!(traces[3].error.is_some());
        let complete = traces.iter().filter(|t| t.error.is_none()).count();
        assert_eq!(complete, 9);
        let report = aggregate("unit", &traces, &config);
        assert_eq!(report.failures, 1);
        assert_eq!(report.all.n, 9);
    }

    #[tokio::test]
    async fn parallelism_does_not_change_the_aggregate() {
        let config = AttackConfig::default();
        let mut reports = Vec::new();
        for parallelism in [1usize, 8] {
            let ctx = ctx_with_target(MockModelScript::constant("Sure, step one"));
            let traces = run_campaign(&manifest(12), &ctx, &config, parallelism)
                .await
                .unwrap();
            reports.push(aggregate("unit", &traces, &config));
        }
        assert_eq!(reports[0], reports[1]);
    }
}
