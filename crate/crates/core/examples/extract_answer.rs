// Answer extraction falls back from the answer marker to prose cues to a
// mention of exactly one option's text.

use reasforge::answer::RuleTable;
use reasforge::ExtractionMethod;

pub fn run_example() {
    let options: Vec<String> = ["The blanket", "The table", "The closet/cabinet"].map(String::from).to_vec();
    let rules = RuleTable::default();
    let cases = [
        ("The person opens the cabinet.\n###Answer: C", Some(2), ExtractionMethod::MarkerPattern),
        ("She folds it. Therefore, the correct answer is A.", Some(0), ExtractionMethod::ProsePattern),
        ("Only the table is ever touched.", Some(1), ExtractionMethod::OptionTextMatch),
        ("Hard to say from these frames.", None, ExtractionMethod::Unparseable),
    ];
    for (text, index, method) in cases {
        let e = rules.extract(text, &options);
        println!("{:<18} {:?} <- {text:?}", format!("{:?}", e.method), e.predicted_index);
        assert_eq!((e.predicted_index, e.method), (index, method));
    }
}

fn main() {
    run_example();
}
