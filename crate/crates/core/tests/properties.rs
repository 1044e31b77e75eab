use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::{json, Value};

use p2va_core::audit::{
    build_audit, conditional_profile, dimension_distribution, Distribution, ProfileTarget, ToneGroups, FEMALE, MALE,
};
use p2va_core::clients::replay::{cache_key, canonical_json};
use p2va_core::convert::parse_closed_response;
use p2va_core::corpus::{persist_run, read_run, Clock, Endpoints, Method, RunManifest, RunRecord};
use p2va_core::eval::{edit_distance, wer, EvalResult, EvalTable};
use p2va_core::render::{mentions_label, render_template, MAX_DESCRIPTION_CHARS};
use p2va_core::schema::{default_schema, is_sentinel, normalize_label, validate_record};
use p2va_core::StyleSchema;

mod common;
use common::{labelled_records, phrase, record_strategy};

fn schema() -> StyleSchema {
    default_schema()
}

#[test]
fn canonical_labels_are_fixed_points() {
    let s = schema();
    for d in s.closed_dimensions() {
        for label in &d.canonical_labels {
            assert_eq!(&normalize_label(d, label).unwrap().canonical, label);
        }
    }
}

#[test]
fn default_schema_file_round_trip_is_byte_identical() {
    let text = schema().to_json();
    assert_eq!(StyleSchema::from_json(&text).unwrap().to_json(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn evidence_never_changes_the_canonical_label(
        dim in prop::sample::select(vec!["gender", "accent", "tone", "speed", "pitch", "prosody", "timbre"]),
        head in prop::sample::select(vec!["Male", "woman", "British", "us", "Warm", "enthusiastic", "Fast", "measured", "deep", "Medium", "lilting", "Martian"]),
        ev in phrase(),
    ) {
        let s = schema();
        let d = s.dimension(dim).unwrap();
        let with = normalize_label(d, &format!("{head} ({ev})")).unwrap();
        let without = normalize_label(d, head).unwrap();
        prop_assert_eq!(with.canonical, without.canonical);
        prop_assert_eq!(with.evidence, Some(ev));
    }

    #[test]
    fn parsed_records_always_validate(body in prop::collection::btree_map(
        prop::sample::select(vec!["gender", "accent", "tone", "speed", "pitch", "prosody", "timbre", "mood"]),
        "[ -~]{0,30}",
        0..8,
    )) {
        let s = schema();
        let text = serde_json::to_string(&body).unwrap();
        if let Ok(record) = parse_closed_response(&text, &s) {
            prop_assert!(validate_record(&record, &s).is_empty());
        }
    }

    #[test]
    fn flat_serialization_round_trips(record in record_strategy()) {
        let s = schema();
        let parsed = parse_closed_response(&record.to_flat_json(&s), &s).unwrap();
        prop_assert_eq!(parsed, record);
    }

    #[test]
    fn template_is_total_bounded_and_names_every_label(record in record_strategy()) {
        let s = schema();
        let a = render_template(&record, &s).unwrap();
        let b = render_template(&record, &s).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.text.chars().count() <= MAX_DESCRIPTION_CHARS);
        for d in s.closed_dimensions() {
            let label = record.canonical(&d.name);
            if !is_sentinel(label) {
                prop_assert!(mentions_label(&a.text, d, label), "{} missing from {:?}", label, a.text);
            }
        }
    }

    #[test]
    fn cache_keys_ignore_key_order(pairs in prop::collection::btree_map("[a-z]{1,6}", any::<i32>(), 1..8)) {
        let forward: serde_json::Map<String, Value> =
            pairs.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let mut reversed = serde_json::Map::new();
        for (k, v) in pairs.iter().rev() {
            reversed.insert(k.clone(), json!(v));
        }
        prop_assert_eq!(canonical_json(&Value::Object(forward.clone())), canonical_json(&Value::Object(reversed.clone())));
        prop_assert_eq!(cache_key("chat", &forward), cache_key("chat", &reversed));
    }

    #[test]
    fn edit_distance_is_a_metric(
        a in prop::collection::vec(0u8..4, 0..8),
        b in prop::collection::vec(0u8..4, 0..8),
        c in prop::collection::vec(0u8..4, 0..8),
    ) {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        prop_assert_eq!(edit_distance(&a, &a), 0);
        if !a.is_empty() {
            prop_assert_eq!(wer(&a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn eval_table_ignores_record_order(
        rows in prop::collection::vec((0usize..3, 0.0f64..2.0, prop::option::of(1.0f64..5.0)), 1..40),
        seed in any::<u64>(),
    ) {
        let results: Vec<EvalResult> = rows
            .iter()
            .enumerate()
            .map(|(i, (m, w, mos))| EvalResult {
                pair_id: format!("{i:06}"),
                method: Method::ALL[*m],
                wer: *w,
                hypothesis: None,
                utmos: *mos,
                mos_llm: None,
                mos_human: *mos,
            })
            .collect();
        let mut shuffled = results.clone();
        let n = shuffled.len();
        let mut x = seed;
        for i in (1..n).rev() {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (x >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(EvalTable::from_results(&results), EvalTable::from_results(&shuffled));
    }

    #[test]
    fn distributions_sum_to_100_and_survive_duplication(records in labelled_records()) {
        let s = schema();
        let groups = ToneGroups::default();
        let pct = |d: &Distribution| d.cells.iter().map(|c| (c.label.clone(), c.tenths)).collect::<Vec<_>>();
        let report = build_audit(&records, None, &s, &groups);
        let doubled: Vec<_> = records.iter().chain(records.iter()).cloned().collect();
        let report2 = build_audit(&doubled, None, &s, &groups);
        for (a, b) in report.distributions.iter().zip(&report2.distributions) {
            let d = &a.distribution;
            prop_assert!(d.sum_tenths().abs_diff(1000) <= 2, "{} sums to {}", a.dimension, d.sum_tenths());
            prop_assert_eq!(pct(d), pct(&b.distribution));
        }
        for dim in ["gender", "speed", "pitch"] {
            prop_assert_eq!(
                pct(&dimension_distribution(&records, dim, &s)),
                pct(&dimension_distribution(&doubled, dim, &s))
            );
        }
        for (p, p2) in report.profiles.iter().zip(&report2.profiles) {
            for (row, row2) in p.rows.iter().chain(p.extended.iter()).zip(p2.rows.iter().chain(p2.extended.iter())) {
                if !row.distribution.is_empty() {
                    prop_assert!(row.distribution.sum_tenths().abs_diff(1000) <= 2);
                }
                prop_assert_eq!(pct(&row.distribution), pct(&row2.distribution));
            }
        }
    }

    #[test]
    fn gender_rows_are_independent(records in labelled_records(), extra in labelled_records()) {
        let s = schema();
        let groups = ToneGroups::default();
        let females: Vec<_> = extra.into_iter().filter(|r| r.canonical("gender") == FEMALE).collect();
        let mut with_females = records.clone();
        with_females.extend(females);
        for target in ProfileTarget::ALL {
            let before = conditional_profile(&records, target, &s, &groups);
            let after = conditional_profile(&with_females, target, &s, &groups);
            prop_assert_eq!(before.rows[0].gender.as_str(), MALE);
            prop_assert_eq!(&before.rows[0], &after.rows[0]);
        }
    }

    #[test]
    fn persistence_is_lossless(
        texts in prop::collection::vec(("\\PC{1,40}", "\\PC{1,40}"), 0..6),
        seed in any::<u64>(),
    ) {
        let records: Vec<RunRecord> = texts
            .iter()
            .enumerate()
            .map(|(i, (persona, transcript))| RunRecord {
                pair_id: format!("{i:06}"),
                persona_id: i.to_string(),
                transcript_id: format!("t{i}"),
                method: Method::Baseline,
                persona_text: persona.clone(),
                transcript_text: transcript.clone(),
                conversion: None,
                description: Some(persona.clone()),
                description_origin: None,
                audio: None,
                metrics: None,
                error: (i % 3 == 2).then(|| "boom".to_string()),
                created_at: Clock::default().now(),
            })
            .collect();
        let manifest = RunManifest {
            run_id: String::new(),
            method: Method::Baseline,
            seed,
            sample_size: records.len(),
            schema_version: "1.0".into(),
            schema_hash: schema().content_hash(),
            prompt_hashes: BTreeMap::new(),
            render_mode: "template".into(),
            chat: Default::default(),
            endpoints: Endpoints::default(),
            replay: Default::default(),
            config_hash: String::new(),
        }
        .seal();
        let dir = tempfile::tempdir().unwrap();
        let run_id = persist_run(&records, &manifest, dir.path()).unwrap();
        prop_assert_eq!(&run_id, &manifest.run_id);
        let (m, r) = read_run(dir.path()).unwrap();
        prop_assert_eq!(m, manifest);
        prop_assert_eq!(r, records);
    }
}
