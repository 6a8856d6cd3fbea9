#!/usr/bin/env python3
"""Writes the simulated focus-group dataset on transitioning to remote work.

Output: CSV with columns id,name,message. 345 turns, 9,309 words in the
message column: short turns averaging about 23 words, 6 medium turns of about
112 words and 2 long turns of about 391 words, so the overall mean is about
27 words per turn. Deterministic for a given seed.
"""

import argparse
import csv
import random

TOTAL_WORDS = 9309
TURNS = 345
MEDIUM = [108, 110, 112, 113, 114, 115]
LONG = [389, 393]

PARTICIPANTS = ["Alex", "Priya", "Jordan", "Mei", "Tomasz", "Fatima", "Diego", "Hannah", "Kwame", "Sofia"]
MODERATOR = "Moderator"

TOPICS = {
    "flexibility": [
        "I can shape my day around when I actually focus best",
        "being able to start early and take a long lunch with my kids has been great",
        "the flexibility means I can go to a doctor appointment without asking anyone",
        "I like that I decide when the deep work happens",
        "some days I work late but I take the morning for myself",
    ],
    "commute": [
        "not commuting gives me back almost two hours every single day",
        "I used to spend ninety minutes on the train and now I spend it walking the dog",
        "the time I saved on travel went straight into sleep",
        "skipping the commute is the biggest win for me",
        "I do not miss sitting in traffic at all",
    ],
    "balance": [
        "the line between work and home has basically disappeared",
        "I find myself answering messages at ten at night",
        "my laptop is on the kitchen table so work is always there",
        "it is hard to switch off when the office is the living room",
        "I had to set a hard stop at six or I would never stop",
    ],
    "isolation": [
        "I feel lonely some weeks because I do not talk to anyone in person",
        "I miss the small chats by the coffee machine",
        "there are days when the only voice I hear is my own on calls",
        "working alone all day wears on my mood",
        "I started going to a cafe just to be around people",
    ],
    "technical": [
        "my internet drops in the middle of calls and it is embarrassing",
        "the VPN kicks me out every hour",
        "our video tool freezes whenever more than ten people join",
        "I spent a whole morning trying to get the printer drivers working",
        "IT support is slower when you cannot walk over to their desk",
    ],
    "communication": [
        "messages get misread because you lose the tone of voice",
        "we have too many channels and nobody knows where decisions live",
        "I have to over-explain things in writing now",
        "a quick question that took a minute in person now takes a day on chat",
        "clear written updates have actually improved our documentation",
    ],
    "productivity": [
        "I get more done without interruptions from people stopping by",
        "my output went up because I control the noise around me",
        "some days I am far more productive at home than I ever was in the office",
        "I finish tasks faster when I can block out the morning",
        "the quiet lets me concentrate on hard problems",
    ],
    "workspace": [
        "I had to buy a proper chair after my back started hurting",
        "working from the couch was fine for a week and then it was not",
        "a second monitor changed everything for me",
        "my company gave a small allowance for a desk which helped",
        "I turned the spare room into an office and it made a real difference",
    ],
    "caregiving": [
        "juggling childcare and meetings is exhausting",
        "my kids walk into calls and everyone has learned to accept it",
        "being home means I can look after my mother when she needs me",
        "school pickups are easier but the afternoons are chaotic",
        "caring for family while working makes my schedule unpredictable",
    ],
    "trust": [
        "my manager checks whether I am online which feels like surveillance",
        "I feel trusted to get my work done without someone watching",
        "there is pressure to show you are busy all the time",
        "some leaders still measure work by hours instead of results",
        "trust grew once we agreed on clear goals for each week",
    ],
    "onboarding": [
        "starting a new job remotely was really confusing",
        "new hires struggle to learn the unwritten rules",
        "I onboarded two people over video and it took twice as long",
        "without sitting next to someone it is hard to pick things up",
        "a buddy system helped our new colleagues settle in",
    ],
    "health": [
        "I move a lot less now and my back has noticed",
        "I cook at home so I eat better than I did at the office",
        "staring at screens all day gives me headaches",
        "I started running at lunch because I finally have the time",
        "my stress went down once I stopped commuting",
    ],
    "meetings": [
        "back to back video calls leave me drained by three",
        "every conversation became a scheduled meeting",
        "we now have meetings about meetings",
        "camera fatigue is real and I keep mine off when I can",
        "shorter meetings with agendas have made a big difference",
    ],
    "career": [
        "I worry that being out of sight means being passed over for promotion",
        "it is harder to get noticed by senior people",
        "mentoring feels thin when it is only on video",
        "I have taken more online courses since going remote",
        "the people in the office seem to get the interesting projects",
    ],
    "costs": [
        "I save a lot of money on fuel and lunches",
        "my heating and electricity bills went up in winter",
        "not buying work clothes has saved me money",
        "the savings on travel let me pay down some debt",
        "my employer does not cover the extra costs of working at home",
    ],
    "boundaries": [
        "I set rules with my partner about when I am at work",
        "closing the door at the end of the day signals that work is over",
        "I turned off notifications on my phone after hours",
        "I get dressed for work even at home to keep a routine",
        "having a ritual to start and end the day helps me",
    ],
    "tools": [
        "shared documents made collaboration easier than email ever was",
        "we rely on the project board to know who is doing what",
        "learning five new apps at once was overwhelming",
        "the digital whiteboard works surprisingly well for brainstorming",
        "the tools are fine but people use them differently",
    ],
    "culture": [
        "team spirit faded once we stopped having lunch together",
        "our virtual social hours feel forced",
        "we started a weekly show and tell which brought people closer",
        "it is harder to feel part of the company from home",
        "celebrating wins online does not feel the same",
    ],
    "hybrid": [
        "two days in the office and three at home would be ideal for me",
        "I want the choice rather than a fixed rule",
        "going in only for collaboration days makes sense",
        "hybrid works if everyone is in on the same days",
        "I would leave if they forced us back full time",
    ],
    "timezones": [
        "working with colleagues in other time zones means early calls",
        "asynchronous updates help when the team is spread out",
        "I often start at seven to overlap with the team in Europe",
        "handoffs across time zones cause delays",
        "we rotate meeting times so nobody is always stuck at night",
    ],
}

QUESTIONS = [
    "Let's start with introductions. What was your first week of remote work like?",
    "What do you value most about working from home?",
    "What has been the hardest part of the transition?",
    "How has your daily routine changed?",
    "How do you keep work separate from the rest of your life?",
    "What role has technology played, for better or worse?",
    "How has communication within your team changed?",
    "How do you think your productivity has changed?",
    "How did your home workspace evolve over time?",
    "How has remote work affected your health and wellbeing?",
    "What do you think about video meetings?",
    "How has remote work affected your career plans?",
    "Have your personal costs gone up or down?",
    "How do you stay connected with colleagues?",
    "How has your relationship with your manager changed?",
    "What has onboarding been like for new colleagues?",
    "How do you handle family responsibilities during the workday?",
    "What would your ideal arrangement look like going forward?",
    "How do you handle working across time zones?",
    "Which tools have helped you the most?",
    "How has the team culture changed?",
    "What advice would you give someone starting to work remotely?",
    "Is there anything we have not covered that matters to you?",
    "If you could change one thing about your setup, what would it be?",
    "To wrap up, how would you sum up the transition in a sentence?",
]

OPENERS = ["Honestly,", "For me,", "I think", "To be fair,", "In my case,", "Well,", "Personally,", "Yeah,", ""]
LINKS = [" and ", ", but ", ", although ", ". Also, ", ". On the other hand, ", ", so "]


def words(s):
    return len(s.split())


def sentence(rng, topic):
    return rng.choice(TOPICS[topic])


def compose(rng, target, topics):
    opener = rng.choice(OPENERS)
    parts = []
    t_index = 0
    text = ""
    while True:
        topic = topics[t_index % len(topics)]
        t_index += 1
        s = sentence(rng, topic)
        candidate = s if not parts else parts[-1] + rng.choice(LINKS) + s
        if parts and words((opener + " " + candidate).strip()) > target:
            break
        if not parts:
            parts.append(s)
        else:
            parts[-1] = candidate
        text = (opener + " " + parts[-1]).strip()
        if words(text) >= target - 3:
            break
    text = text[0].upper() + text[1:]
    return text + "."


def fit(text, target, rng, topics):
    """Pads or trims `text` to exactly `target` words, keeping a final period."""
    ws = text.rstrip(".").split()
    pad_topic = 0
    while len(ws) < target:
        extra = sentence(rng, topics[pad_topic % len(topics)]).split()
        pad_topic += 1
        ws += ["and"] + extra
    ws = ws[:target]
    while ws and ws[-1] in ("and", "but", "so", "the", "a", "to", "of", "I"):
        ws[-1] = "really"
    return " ".join(ws).rstrip(",") + "."


def build(seed):
    rng = random.Random(seed)
    topic_names = list(TOPICS)
    n_questions = len(QUESTIONS)
    n_answers = TURNS - n_questions
    # positions of the longer answers among the answer turns
    special_positions = rng.sample(range(20, n_answers - 5), len(MEDIUM) + len(LONG))
    lengths = {}
    for pos, n in zip(special_positions, MEDIUM + LONG):
        lengths[pos] = n

    question_words = sum(words(q) for q in QUESTIONS)
    fixed = sum(MEDIUM) + sum(LONG)
    short_positions = [i for i in range(n_answers) if i not in lengths]
    short_budget = TOTAL_WORDS - question_words - fixed
    base = short_budget // len(short_positions)
    remainder = short_budget - base * len(short_positions)
    for k, pos in enumerate(short_positions):
        jitter = rng.randint(-9, 9)
        lengths[pos] = base + jitter
    # repair the jitter to hit the short-answer budget exactly
    drift = sum(lengths[p] for p in short_positions) - (short_budget - remainder) - remainder
    k = 0
    while drift != 0:
        p = short_positions[k % len(short_positions)]
        step = -1 if drift > 0 else 1
        if 8 <= lengths[p] + step <= 45:
            lengths[p] += step
            drift += step
        k += 1

    answers_per_question = [n_answers // n_questions] * n_questions
    for i in range(n_answers - sum(answers_per_question)):
        answers_per_question[i] += 1

    rows = []
    answer_index = 0
    turn = 0
    speaker_cycle = 0
    for qi, q in enumerate(QUESTIONS):
        turn += 1
        rows.append((f"t{turn:03d}", MODERATOR, q))
        for _ in range(answers_per_question[qi]):
            turn += 1
            name = PARTICIPANTS[(speaker_cycle + rng.randint(0, 2)) % len(PARTICIPANTS)]
            speaker_cycle += 1
            target = lengths[answer_index]
            first = topic_names[(qi + answer_index) % len(topic_names)]
            picks = [first] + rng.sample(topic_names, 3)
            text = fit(compose(rng, target, picks), target, rng, picks)
            rows.append((f"t{turn:03d}", name, text))
            answer_index += 1
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    rows = build(args.seed)
    total = sum(words(r[2]) for r in rows)
    assert total == TOTAL_WORDS, total
    assert len(rows) == TURNS
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "name", "message"])
        w.writerows(rows)
    speakers = {r[1] for r in rows}
    print(f"{args.out}: {len(rows)} turns, {total} words, {len(speakers)} speakers")


if __name__ == "__main__":
    main()
