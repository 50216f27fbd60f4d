use ecgtize::lead::{LEAD_COUNT, RECORD_SAMPLES};
use ecgtize::record::EcgRecord;
use ecgtize::recordio::{from_microvolts, parse_csv, parse_xml, to_csv, to_microvolts, to_xml};
use ecgtize::textscrub::{MetadataEntry, PageMetadata};
use proptest::prelude::*;

fn record() -> impl Strategy<Value = EcgRecord> {
    (
        prop::collection::vec(-5.0f64..5.0, 64),
        prop::collection::vec(any::<bool>(), 64),
        prop::collection::vec(("[ -~]{0,12}", 0usize..3000, 0usize..3000), 0..4),
    )
        .prop_map(|(vals, mask, texts)| {
            let mut r = EcgRecord::empty();
            for l in 0..LEAD_COUNT {
                for t in 0..RECORD_SAMPLES {
                    let k = (l * 7 + t * 13) % 64;
                    r.leads[l][t] = vals[k];
                    r.observed_mask[l][t] = mask[(l + t / 97) % 64];
                }
            }
            r.metadata = PageMetadata {
                entries: texts
                    .into_iter()
                    .map(|(text, x, y)| MetadataEntry {
                        text,
                        x0: x,
                        y0: y,
                        x1: x + 5,
                        y1: y + 3,
                    })
                    .collect(),
            };
            r
        })
}

fn quantized(r: &EcgRecord) -> Vec<Vec<f64>> {
    r.leads.iter().map(|l| l.iter().map(|&v| from_microvolts(to_microvolts(v))).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn xml_round_trip(r in record()) {
        let back = parse_xml(&to_xml(&r, false)).unwrap();
        prop_assert_eq!(&back.leads, &quantized(&r));
        prop_assert_eq!(&back.observed_mask, &r.observed_mask);
        prop_assert_eq!(&back.metadata, &r.metadata);
        // Writing the parsed record again reproduces the bytes.
        prop_assert_eq!(to_xml(&back, false), to_xml(&r, false));
    }

    #[test]
    fn anonymized_xml_carries_no_metadata(r in record()) {
        let back = parse_xml(&to_xml(&r, true)).unwrap();
        prop_assert!(back.metadata.entries.is_empty());
        prop_assert_eq!(&back.leads, &quantized(&r));
    }

    #[test]
    fn csv_round_trip_keeps_values(r in record()) {
        let back = parse_csv(&to_csv(&r)).unwrap();
        prop_assert_eq!(&back.leads, &quantized(&r));
        prop_assert!(back.is_fully_observed());
    }
}
