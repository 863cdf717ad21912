mod support;

use std::collections::HashSet;

use demfeed::corpus::{
    bucket_bounds, engagement_order, engagement_score, import_annotations, ingest, split, stratified_sample,
    IngestFormat, SamplePlan,
};
use demfeed::{AnnotationColumn, AttitudeScore, Corpus, EngagementCounts, Score};
use proptest::prelude::*;

fn fixture_corpus() -> Corpus {
    Corpus::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus.jsonl")).unwrap()
}

fn corpus_of(engagements: &[u64]) -> Corpus {
    let t = support::fixed_time();
    Corpus::from_posts(
        engagements
            .iter()
            .enumerate()
            .map(|(i, &e)| support::post(&format!("c{i:05}"), "t", e, t, None)),
    )
    .0
}

#[test]
fn fixture_spans_the_full_engagement_range() {
    let corpus = fixture_corpus();
    assert_eq!(corpus.len(), 50);
    let scores: Vec<u64> = corpus.posts().iter().map(engagement_score).collect();
    assert_eq!(scores.iter().min(), Some(&24));
    assert_eq!(scores.iter().max(), Some(&92_520));
}

#[test]
fn crowdtangle_rows_are_cleaned() {
    let csv = "\
Facebook Id,Page Name,Page Category,Message,Post Created,Likes,Comments,Shares,Love,Wow,Haha,Sad,Angry,Care
a1,Page,POLITICIAN,Hello there,2023-01-02 10:00:00 EST,10,2,3,0,0,0,0,0,1
a2,Page,POLITICIAN,,2023-01-02 10:00:00 EST,10,2,3,0,0,0,0,0,1
a3,Page,MEDIA,Other text,not a date,1,1,1,1,1,1,1,1,1
a4,Page,PARTY,Big,2023-01-03T10:00:00Z,92000,100,400,5,5,5,5,0,0
a1,Page,POLITICIAN,Dup,2023-01-02 10:00:00 EST,1,1,1,1,1,1,1,1,1
";
    let (corpus, report) = ingest(csv.as_bytes(), IngestFormat::CrowdtangleCsv).unwrap();
    assert_eq!(corpus.len(), 2);
    assert_eq!(report.rows_read, 5);
    assert_eq!(report.dropped_empty_text, 1);
    assert_eq!(report.dropped_bad_timestamp, 1);
    assert_eq!(report.duplicates, 1);
    assert_eq!(engagement_score(corpus.get("a4").unwrap()), 92_520);
    assert_eq!(corpus.get("a1").unwrap().page_category, "politician");
}

#[test]
fn corpus_jsonl_round_trips() {
    let corpus = fixture_corpus();
    let mut buf = Vec::new();
    corpus.write_jsonl(&mut buf).unwrap();
    assert!(buf.ends_with(b"\n"));
    let back = Corpus::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back.posts(), corpus.posts());
}

#[test]
fn plan_larger_than_corpus_fails() {
    let corpus = corpus_of(&[1, 2, 3, 4, 5, 6]);
    let plan = SamplePlan { bucket_count: 3, per_bucket: 3, seed: 1 };
    assert!(stratified_sample(&corpus, &plan).is_err());
}

#[test]
fn annotation_csv_rejects_bad_rows() {
    let corpus = corpus_of(&[1, 2, 3]);
    let csv = "post_id,v1,v2,v3,v4,v5,v6,v7,v8\n\
c00000,1,1,1,1,1,1,1,1\n\
c00001,1,4,1,1,1,1,1,1\n\
zzz,1,1,1,1,1,1,1,1\n\
c00000,2,2,2,2,2,2,2,2\n\
c00002,3,3,3,3,3,3,3,3\n";
    let (column, report) = import_annotations(csv.as_bytes(), "coder", Some(&corpus)).unwrap();
    assert_eq!(report.accepted, 2);
    let lines: Vec<usize> = report.rejected.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![3, 4, 5]);
    assert_eq!(column.get("c00002").unwrap().total(), 24);
}

proptest! {
    #[test]
    fn engagement_is_additive(counts in prop::array::uniform9(0u64..100_000), k in 0usize..9, bump in 1u64..1000) {
        let mut post = support::post("x", "t", 0, support::fixed_time(), None);
        post.engagement = EngagementCounts::from_array(counts);
        let before = engagement_score(&post);
        prop_assert_eq!(before, counts.iter().sum::<u64>());
        let mut more = counts;
        more[k] += bump;
        post.engagement = EngagementCounts::from_array(more);
        prop_assert_eq!(engagement_score(&post), before + bump);
    }

    #[test]
    fn samples_are_deterministic_and_stratified(
        engagements in prop::collection::vec(0u64..200, 20..300),
        buckets in 1usize..6,
        per in 1usize..5,
        seed in any::<u64>(),
    ) {
        let corpus = corpus_of(&engagements);
        let plan = SamplePlan { bucket_count: buckets, per_bucket: per, seed };
        prop_assume!(buckets * per <= corpus.len());
        let a = stratified_sample(&corpus, &plan).unwrap();
        let b = stratified_sample(&corpus, &plan).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.posts.len(), buckets * per);
        let ids: HashSet<&str> = a.posts.iter().map(|p| p.post_id.as_str()).collect();
        prop_assert_eq!(ids.len(), a.posts.len());
        let order: Vec<&str> = engagement_order(corpus.posts()).iter().map(|p| p.post_id.as_str()).collect();
        let bounds = bucket_bounds(corpus.len(), buckets);
        for (p, bucket) in a.posts.iter().zip(&a.buckets) {
            let rank = order.iter().position(|id| *id == p.post_id).unwrap();
            let (lo, hi) = bounds[*bucket];
            prop_assert!(lo <= rank && rank < hi);
        }
    }

    #[test]
    fn split_partitions(n in 0usize..80, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let corpus = corpus_of(&vec![1; n]);
        let first = (n as f64 * frac) as usize;
        let (a, b) = split(corpus.posts(), first, seed).unwrap();
        prop_assert_eq!(a.len(), first);
        prop_assert_eq!(a.len() + b.len(), n);
        let all: HashSet<&str> = a.iter().chain(&b).map(|p| p.post_id.as_str()).collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(split(corpus.posts(), first, seed).unwrap(), (a, b));
    }

    #[test]
    fn annotation_columns_round_trip(rows in prop::collection::vec(prop::array::uniform8(1i64..=3), 1..40)) {
        let mut column = AnnotationColumn::new("coder");
        for (i, raw) in rows.iter().enumerate() {
            column.insert(AttitudeScore::from_scores(format!("p{i}"), raw.map(|s| Score::new(s).unwrap()), "coder"));
        }
        let mut csv = Vec::new();
        column.write_csv(&mut csv).unwrap();
        let (back, report) = import_annotations(csv.as_slice(), "coder", None).unwrap();
        prop_assert!(report.rejected.is_empty());
        prop_assert_eq!(&back, &column);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("col.jsonl");
        column.save(&path).unwrap();
        let (back, _) = AnnotationColumn::load(&path, "coder", None).unwrap();
        prop_assert_eq!(back, column);
    }
}

#[test]
fn zone_abbreviations_shift_to_utc() {
    use demfeed::corpus::parse_timestamp;
    let est = parse_timestamp("2023-01-02 10:00:00 EST").unwrap();
    assert_eq!(est.to_rfc3339(), "2023-01-02T15:00:00+00:00");
    assert_eq!(parse_timestamp("2023-01-02 10:00:00 UTC"), parse_timestamp("2023-01-02T10:00:00Z"));
    assert_eq!(parse_timestamp("2023-01-02 10:00:00 XYZ"), None);
}
