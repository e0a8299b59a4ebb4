use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CorpusError;
use crate::data_model::{Attribute, SongRecord};

/// Per-modality counts of `attribute`.
pub fn class_counts(songs: &[SongRecord], attribute: Attribute) -> Vec<usize> {
    let mut counts = vec![0; attribute.schema().len()];
    for s in songs {
        counts[s.truth(attribute)] += 1;
    }
    counts
}

/// `per_class` songs per modality, drawn uniformly without replacement.
///
/// Songs are sorted by `song_id` before sampling, so the result depends only
/// on the set of songs and the seed. The output is sorted by `song_id`.
pub fn balance_subset(
    songs: &[SongRecord],
    attribute: Attribute,
    per_class: usize,
    seed: u64,
) -> Result<Vec<SongRecord>, CorpusError> {
    let schema = attribute.schema();
    let mut sorted: Vec<&SongRecord> = songs.iter().collect();
    sorted.sort_by(|a, b| a.song_id.cmp(&b.song_id));
    let mut classes: Vec<Vec<&SongRecord>> = vec![Vec::new(); schema.len()];
    for s in sorted {
        classes[s.truth(attribute)].push(s);
    }
    if let Some((k, members)) = classes.iter().enumerate().find(|(_, m)| m.len() < per_class) {
        return Err(CorpusError::Insufficient {
            modality: schema.name(k).unwrap_or("?").to_string(),
            available: members.len(),
            requested: per_class,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<SongRecord> = Vec::with_capacity(per_class * classes.len());
    for members in &classes {
        for i in sample(&mut rng, members.len(), per_class) {
            out.push(members[i].clone());
        }
    }
    out.sort_by(|a, b| a.song_id.cmp(&b.song_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::Source;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn corpus(per_region: usize) -> Vec<SongRecord> {
        (0..6 * per_region)
            .map(|i| SongRecord {
                song_id: format!("s{i:05}"),
                artist_id: format!("a{i}"),
                title: String::new(),
                source: Source::Spotify,
                lyrics: None,
                translated_lyrics: None,
                needs_translation: false,
                true_gender: i % 2,
                true_region: i % 6,
                genre: None,
                word_count: 0,
            })
            .collect()
    }

    #[test]
    fn six_regions_of_six_hundred() {
        let songs = corpus(700);
        let out = balance_subset(&songs, Attribute::Ethnicity, 600, 3).unwrap();
        assert_eq!(out.len(), 3600);
        assert_eq!(class_counts(&out, Attribute::Ethnicity), vec![600; 6]);
    }

    #[test]
    fn zero_per_class_is_empty() {
        assert!(balance_subset(&corpus(3), Attribute::Gender, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn deficient_modality_is_named() {
        let songs = corpus(10);
        let err = balance_subset(&songs, Attribute::Ethnicity, 11, 1).unwrap_err();
        assert_eq!(
            err,
            CorpusError::Insufficient {
                modality: "Africa".into(),
                available: 10,
                requested: 11
            }
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn input_order_does_not_matter(seed in any::<u64>(), shuffle in any::<u64>()) {
            let songs = corpus(20);
            let mut shuffled = songs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
            let a = balance_subset(&songs, Attribute::Ethnicity, 7, seed).unwrap();
            let b = balance_subset(&shuffled, Attribute::Ethnicity, 7, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
