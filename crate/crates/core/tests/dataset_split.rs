use esad_core::dataset::{
    map_binary_label, parse_manifest, parse_metadata, stratified_split, write_manifest, Assignment, BinaryLabel,
    DatasetError, LabelMapping, ManifestEntry, Partition, SplitSpec, UrbanClass,
};
use proptest::prelude::*;

/// Per-class clip counts of the published UrbanSound8K metadata, in classID order.
const CLASS_COUNTS: [usize; 10] = [1000, 429, 1000, 1000, 1000, 1000, 374, 1000, 929, 1000];
/// Supports reported for the class-wise evaluation table.
const REPORTED_NORMAL: usize = 3996;
const REPORTED_ANOMALOUS: usize = 4283;

fn group_counts(assign: &[Assignment; 10]) -> (usize, usize) {
    let mut n = (0, 0);
    for (a, &c) in assign.iter().zip(&CLASS_COUNTS) {
        match a {
            Assignment::Label(BinaryLabel::Normal) => n.0 += c,
            Assignment::Label(BinaryLabel::Anomalous) => n.1 += c,
            Assignment::Excluded => {}
        }
    }
    n
}

#[test]
fn default_mapping_is_the_best_reconciliation_of_reported_supports() {
    use BinaryLabel::*;
    let choices = [Assignment::Label(Normal), Assignment::Label(Anomalous), Assignment::Excluded];
    let named_anomalous = [UrbanClass::Siren, UrbanClass::GunShot, UrbanClass::Jackhammer, UrbanClass::DogBark];
    let named_normal = [UrbanClass::EngineIdling, UrbanClass::AirConditioner, UrbanClass::ChildrenPlaying];

    let mut best: Vec<[Assignment; 10]> = Vec::new();
    let mut best_dist = usize::MAX;
    for code in 0..3usize.pow(10) {
        let mut assign = [Assignment::Excluded; 10];
        let mut c = code;
        for slot in &mut assign {
            *slot = choices[c % 3];
            c /= 3;
        }
        let consistent = named_anomalous.iter().all(|k| assign[k.id() as usize] == Assignment::Label(Anomalous))
            && named_normal.iter().all(|k| assign[k.id() as usize] == Assignment::Label(Normal));
        if !consistent {
            continue;
        }
        let (n, a) = group_counts(&assign);
        let dist = n.abs_diff(REPORTED_NORMAL) + a.abs_diff(REPORTED_ANOMALOUS);
        if dist < best_dist {
            best_dist = dist;
            best.clear();
        }
        if dist == best_dist {
            best.push(assign);
        }
    }
    // counts alone leave drilling / street_music interchangeable
    assert_eq!(best.len(), 2);
    assert_eq!(best_dist, 4 + 20);
    // street music confused with sirens only makes sense if street music is normal
    let street = UrbanClass::StreetMusic.id() as usize;
    let chosen: Vec<_> = best.into_iter().filter(|a| a[street] == Assignment::Label(Normal)).collect();
    assert_eq!(chosen.len(), 1);

    let default = LabelMapping::default();
    for class in UrbanClass::ALL {
        assert_eq!(default.get(class), Some(chosen[0][class.id() as usize]), "{class}");
    }
    assert_eq!(map_binary_label(4, &default).unwrap(), Assignment::Label(Anomalous));
    assert_eq!(map_binary_label(8, &default).unwrap(), Assignment::Label(Anomalous));
    assert_eq!(map_binary_label(5, &default).unwrap(), Assignment::Label(Normal));
    assert_eq!(group_counts(&chosen[0]), (4000, 4303));
}

#[test]
fn mapping_file_round_trip_and_omissions() {
    let text = LabelMapping::default().to_config_string();
    assert_eq!(LabelMapping::parse(&text).unwrap(), LabelMapping::default());
    let partial = LabelMapping::parse("siren = anomalous\n# comment\nair_conditioner = normal").unwrap();
    assert!(matches!(map_binary_label(3, &partial), Err(DatasetError::UnmappedClass(UrbanClass::DogBark))));
    assert!(LabelMapping::parse("siren = loud").is_err());
    assert!(LabelMapping::parse("siren = normal\nsiren = anomalous").is_err());
}

#[test]
fn metadata_parsing() {
    let csv = "slice_file_name,fsID,start,end,salience,fold,classID,class\n\
               100032-3-0-0.wav,100032,0.0,0.317551,1,5,3,dog_bark\n";
    let recs = parse_metadata(csv).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!((recs[0].class_id(), recs[0].fold), (3, 5));
    assert_eq!(recs[0].relative_path(), "fold5/100032-3-0-0.wav");
    assert!((recs[0].duration_s.unwrap() - 0.317551).abs() < 1e-12);

    let bad_class = "slice_file_name,fold,classID,class\nx.wav,1,11,siren\n";
    assert!(parse_metadata(bad_class).is_err());
    let inconsistent = "slice_file_name,fold,classID,class\nx.wav,1,3,siren\n";
    assert!(parse_metadata(inconsistent).is_err());
    let bad_row = "slice_file_name,fold,classID,class\na.wav,1,3,dog_bark\nb.wav,zz,3,dog_bark\n";
    let err = parse_metadata(bad_row).unwrap_err().to_string();
    assert!(err.contains('3'), "{err}");
    assert!(parse_metadata("name,fold\nx,1\n").is_err());
}

fn labels(normal: usize, anomalous: usize) -> Vec<BinaryLabel> {
    // interleave so index order does not line up with labels
    let mut v = Vec::new();
    let (mut n, mut a) = (normal, anomalous);
    while n + a > 0 {
        if n > 0 {
            v.push(BinaryLabel::Normal);
            n -= 1;
        }
        if a > 0 {
            v.push(BinaryLabel::Anomalous);
            a -= 1;
        }
    }
    v
}

#[test]
fn full_dataset_split_sizes() {
    // all ten classes kept: 8,732 clips
    let all: usize = CLASS_COUNTS.iter().sum();
    assert_eq!(all, 8732);
    let lab = labels(4429, 4303);
    let s = stratified_split(&lab, &SplitSpec::default()).unwrap();
    assert_eq!(s.test.len(), 1747);
    assert_eq!(s.train.len() + s.validation.len(), 6985);
    assert_eq!(s.validation.len(), 1397);
}

#[test]
fn balanced_toy_split() {
    let lab = labels(5, 5);
    let s = stratified_split(&lab, &SplitSpec::default()).unwrap();
    let count = |idx: &[usize], l| idx.iter().filter(|&&i| lab[i] == l).count();
    assert_eq!(count(&s.test, BinaryLabel::Normal), 1);
    assert_eq!(count(&s.test, BinaryLabel::Anomalous), 1);
    assert!(matches!(stratified_split(&labels(1, 5), &SplitSpec::default()), Err(DatasetError::TooFewRecords { .. })));
}

#[test]
fn manifest_round_trip() {
    let entries = vec![
        ManifestEntry { file_name: "fold1/a.wav".into(), partition: Partition::Train, label: BinaryLabel::Normal },
        ManifestEntry { file_name: "fold2/b.wav".into(), partition: Partition::Test, label: BinaryLabel::Anomalous },
    ];
    let text = write_manifest(&entries);
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().next().unwrap().split('\t').count(), 3);
    assert_eq!(parse_manifest(&text).unwrap(), entries);
}

proptest! {
    #[test]
    fn split_is_a_stratified_partition(normal in 2usize..400, anomalous in 2usize..400, seed in any::<u64>()) {
        let lab = labels(normal, anomalous);
        let spec = SplitSpec { seed, ..SplitSpec::default() };
        let s = stratified_split(&lab, &spec).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..lab.len()).collect::<Vec<_>>());

        let n = lab.len() as f64;
        for (label, total) in [(BinaryLabel::Normal, normal), (BinaryLabel::Anomalous, anomalous)] {
            for p in Partition::ALL {
                let got = s.get(p).iter().filter(|&&i| lab[i] == label).count() as f64;
                let share = total as f64 * s.get(p).len() as f64 / n;
                prop_assert!((got - share).abs() < 1.0, "{:?} {:?}: {} vs {}", label, p, got, share);
            }
            let test = s.test.iter().filter(|&&i| lab[i] == label).count() as f64;
            prop_assert!((test - (0.2 * total as f64).round()).abs() <= 1.0);
        }
        prop_assert_eq!(stratified_split(&lab, &spec).unwrap(), s);
    }
}
