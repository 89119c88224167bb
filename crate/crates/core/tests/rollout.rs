mod common;

use std::time::Duration;

use proptest::prelude::*;

use common::{code, stub_exec, Recording};
use rci::client::{MockClient, Role};
use rci::pipeline::transcript_from_messages;
use rci::rollout::{
    default_prompt_variants, extract_code_block, run_rollout, RolloutConfig, SegmentKind, Termination, Transcript,
    INJECTION_PREFIX,
};
use rci::sandbox::{Sandbox, SandboxConfig};

fn segment() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[a-z ]{0,20}".prop_map(|s| code(&format!("print('{s}')"))),
        1 => "[0-9]{1,3}".prop_map(|s| format!("Thus <<<{s}>>>")),
        1 => Just(format!("{}\n<<<1>>>", code("print(1)"))),
        1 => Just("```python\nprint(1)\n".to_string()),
        1 => Just("```python\n   \n```".to_string()),
        1 => Just(format!("{}\n{}", code("print(1)"), code("print(2)"))),
        1 => Just(code("raise ValueError('x')")),
        1 => Just(code("while True: pass")),
        1 => Just("<<<no close".to_string()),
        2 => "\\PC{0,60}",
    ]
}

fn config() -> impl Strategy<Value = RolloutConfig> {
    (1u32..7, 1u32..8).prop_map(|(calls, extra)| RolloutConfig {
        max_code_calls: calls,
        max_model_turns: calls + extra,
        exec_timeout: Duration::from_secs(3),
        ..RolloutConfig::default()
    })
}

fn roll(script: &[String], cfg: &RolloutConfig) -> Transcript {
    let client = MockClient::from_script(script.to_vec()).unwrap();
    run_rollout(&common::instance("What is 2+3?"), &client, &stub_exec, cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn budgets_hold_for_any_model_output(script in prop::collection::vec(segment(), 1..30), cfg in config()) {
        let t = roll(&script, &cfg);
        prop_assert!(t.code_calls <= cfg.max_code_calls);
        prop_assert!(t.model_turns <= cfg.max_model_turns);
        prop_assert!(t.check_invariants(&cfg).is_ok(), "{:?}", t.check_invariants(&cfg));
    }

    #[test]
    fn model_text_is_never_lost(script in prop::collection::vec(segment(), 1..30), cfg in config()) {
        let t = roll(&script, &cfg);
        let consumed = t.model_turns as usize;
        prop_assert_eq!(t.model_text(), script[..consumed].concat());
        let models: Vec<&str> = t.segments.iter().filter(|s| s.kind == SegmentKind::Model).map(|s| s.text.as_str()).collect();
        prop_assert_eq!(models, script[..consumed].iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn every_execution_segment_is_an_injection(script in prop::collection::vec(segment(), 1..30), cfg in config()) {
        let t = roll(&script, &cfg);
        for (i, s) in t.segments.iter().enumerate() {
            if s.kind == SegmentKind::Execution {
                prop_assert!(s.text.starts_with("Code Execution Results:\n"));
                prop_assert_eq!(INJECTION_PREFIX.len(), 24);
                prop_assert!(extract_code_block(&t.segments[i - 1].text).is_some());
            }
        }
    }

    #[test]
    fn replay_is_deterministic(script in prop::collection::vec(segment(), 1..20), cfg in config()) {
        let a = serde_json::to_string(&roll(&script, &cfg)).unwrap();
        let b = serde_json::to_string(&roll(&script, &cfg)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn answered_transcripts_round_trip_through_messages(script in prop::collection::vec(segment(), 1..20), cfg in config()) {
        let t = roll(&script, &cfg);
        if t.termination == Termination::Answered {
            let back = transcript_from_messages(&t.task_name, &t.messages()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}

#[test]
fn conversation_roles_follow_the_protocol() {
    let client =
        Recording::new(MockClient::from_script([code("print(1)"), code("print(2)"), "<<<5>>>".into()]).unwrap());
    let t = run_rollout(&common::instance("q?"), &client, &stub_exec, &RolloutConfig::default()).unwrap();
    assert_eq!(t.termination, Termination::Answered);
    let reqs = client.requests.lock().unwrap();
    let roles: Vec<Role> = reqs.last().unwrap().messages.iter().map(|m| m.role).collect();
    assert_eq!(
        roles,
        [
            Role::System,
            Role::User,
            Role::Assistant,
            Role::Tool,
            Role::Assistant,
            Role::Tool
        ]
    );
    assert!(reqs.iter().all(|r| r.temperature == 0.6 && r.max_tokens == 4096));
}

#[test]
fn forced_variant_prompt_is_sent_as_system_message() {
    let variant = default_prompt_variants().pop().unwrap();
    let cfg = RolloutConfig {
        head_prompt: variant.clone(),
        ..RolloutConfig::default()
    };
    let client = Recording::new(MockClient::from_script(["<<<5>>>"]).unwrap());
    run_rollout(&common::instance("q?"), &client, &stub_exec, &cfg).unwrap();
    let reqs = client.requests.lock().unwrap();
    assert_eq!(reqs[0].messages[0].content, variant);
    assert!(variant.ends_with("You must use at least one code block before answering."));
}

#[test]
fn invalid_configs_and_questions_are_rejected() {
    let client = MockClient::from_script(["<<<5>>>"]).unwrap();
    let bad = RolloutConfig {
        max_model_turns: 5,
        ..RolloutConfig::default()
    };
    assert!(run_rollout(&common::instance("q?"), &client, &stub_exec, &bad).is_err());
    assert!(run_rollout(&common::instance("  "), &client, &stub_exec, &RolloutConfig::default()).is_err());
}

#[test]
fn real_interpreter_rollout() {
    let client = MockClient::from_script([code("print(sum(range(10)))"), "The sum is <<<45>>>".into()]).unwrap();
    let sb = Sandbox::new(SandboxConfig::default());
    let cfg = RolloutConfig {
        exec_timeout: Duration::from_secs(20),
        ..RolloutConfig::default()
    };
    let t = run_rollout(&common::instance("Sum 0..9"), &client, &sb, &cfg).unwrap();
    assert_eq!(t.segments[1].text, "Code Execution Results:\n45\n");
    assert_eq!(t.final_answer.as_deref(), Some("45"));
}

#[test]
fn fractional_timeouts_render_as_decimals() {
    let client = MockClient::from_script([code("while True: pass"), "<<<1>>>".into()]).unwrap();
    let cfg = RolloutConfig {
        exec_timeout: Duration::from_millis(1500),
        ..RolloutConfig::default()
    };
    let t = run_rollout(&common::instance("q?"), &client, &stub_exec, &cfg).unwrap();
    assert_eq!(
        t.segments[1].text,
        "Code Execution Results:\nError: execution timed out after 1.5 seconds"
    );
}
