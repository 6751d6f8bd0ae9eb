//! Bundled stopword list (Arabic and English), matched against lowercased words.

pub(crate) const ARABIC: &[&str] = &[
    "في", "من", "على", "إلى", "الى", "عن", "مع", "هذا", "هذه", "ذلك", "تلك", "التي", "الذي",
    "الذين", "أن", "ان", "إن", "كان", "كانت", "يكون", "لا", "ما", "ماذا", "هو", "هي", "هم",
    "هن", "نحن", "أنا", "انا", "أنت", "قد", "لقد", "ثم", "أو", "او", "بين", "كل", "بعد",
    "قبل", "عند", "حتى", "لم", "لن", "و", "ف", "ب", "ل", "ك", "يا", "إذا", "اذا", "كما",
    "لكن", "ولكن", "أي", "اي", "غير", "منذ", "حيث", "عليه", "عليها", "فيه", "فيها", "به",
    "بها", "له", "لها", "منه", "منها", "هناك", "هنا", "أيضا", "ايضا", "وقد", "وهو", "وهي",
    "التى", "الا", "إلا", "ليس", "عندما", "كيف", "لماذا", "متى", "أين", "اين",
];

pub(crate) const ENGLISH: &[&str] = &[
    "the", "a", "an", "of", "to", "in", "and", "or", "is", "are", "was", "were", "be", "been",
    "it", "its", "that", "this", "these", "those", "for", "on", "with", "as", "by", "at",
    "from", "not", "but", "have", "has", "had", "do", "does", "did", "he", "she", "they",
    "we", "you", "i", "his", "her", "their", "our", "your", "which", "who", "what", "when",
    "where", "will", "would", "can", "could", "there", "than", "then", "so", "if", "about",
];
