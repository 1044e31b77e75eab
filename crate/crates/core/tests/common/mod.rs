//! Generators shared by the property and acceptance suites.
#![allow(dead_code)]

use proptest::prelude::*;

use p2va_core::schema::{default_schema, normalize_label, AttributeValue};
use p2va_core::VoiceAttributeRecord;

pub fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-zA-Z][a-z]{0,7}", 1..4).prop_map(|w| w.join(" "))
}

/// Slot text the way a model answers: `Label (evidence)` or a bare label.
fn closed_slot(labels: Vec<String>) -> impl Strategy<Value = String> {
    (prop::sample::select(labels), prop::option::of(phrase())).prop_map(|(l, ev)| match ev {
        Some(ev) => format!("{l} ({ev})"),
        None => l,
    })
}

/// Records built through `normalize_label`, as the parser would build them.
pub fn record_strategy() -> impl Strategy<Value = VoiceAttributeRecord> {
    let schema = default_schema();
    let mut slots: Vec<BoxedStrategy<(String, Option<String>)>> = Vec::new();
    for d in &schema.dimensions {
        let name = d.name.clone();
        let text: BoxedStrategy<String> = if d.is_closed() {
            let mut forms = d.canonical_labels.clone();
            forms.extend(d.synonyms.keys().cloned());
            closed_slot(forms).boxed()
        } else {
            (phrase(), prop::option::of(phrase()))
                .prop_map(|(h, ev)| match ev {
                    Some(ev) => format!("{h} ({ev})"),
                    None => h,
                })
                .boxed()
        };
        slots.push(prop::option::of(text).prop_map(move |t| (name.clone(), t)).boxed());
    }
    slots.prop_map(move |slots| {
        let s = default_schema();
        let mut r = VoiceAttributeRecord::new("", &s);
        for (dim, text) in slots {
            let d = s.dimension(&dim).unwrap();
            match text {
                Some(t) => r.insert(normalize_label(d, &t).unwrap()),
                None if d.is_closed() => r.insert(AttributeValue::unspecified(&dim)),
                None => {}
            }
        }
        r
    })
}

pub fn labelled_records() -> impl Strategy<Value = Vec<VoiceAttributeRecord>> {
    let s = default_schema();
    let pick = |dim: &str| prop::sample::select(s.dimension(dim).unwrap().canonical_labels.clone());
    prop::collection::vec((pick("gender"), pick("tone"), pick("speed"), pick("pitch")), 1..120).prop_map(|rows| {
        let s = default_schema();
        rows.into_iter()
            .map(|(g, t, sp, p)| {
                let mut r = VoiceAttributeRecord::new("p", &s);
                for (dim, label) in [("gender", g), ("tone", t), ("speed", sp), ("pitch", p)] {
                    r.insert(normalize_label(s.dimension(dim).unwrap(), &label).unwrap());
                }
                r
            })
            .collect()
    })
}
