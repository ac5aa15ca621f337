from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from ambigeval.prompts import (
    BASE_PAIRING,
    FewShotExample,
    PromptCatalog,
    PromptContext,
    PromptError,
    RenderedPrompt,
    extract_translation,
    sample_few_shot,
    template_id,
)

GOLDEN_DIR = Path(__file__).parent / "golden"

CATALOG = PromptCatalog.load()
BARE = CATALOG.without_system_message()


def full_context(**overrides) -> PromptContext:
    ctx = PromptContext(
        source_sentence="He washed his hands in a basin.",
        target_language="Chinese",
        domain="Laws",
        word_domain_tags={6: "laws"},
        few_shot_examples=[
            FewShotExample("The power is absolute.", "权力是绝对的。", "Laws"),
            FewShotExample("Solar power is clean.", "太阳能量干净。", "Science"),
        ],
        source_tokens=["He", "washed", "his", "hands", "in", "a", "basin", "."],
        domain_choices=["Education", "Laws", "News", "Science", "Spoken"],
        prior_hypothesis="他在盆里洗手。",
    )
    for key, value in overrides.items():
        setattr(ctx, key, value)
    return ctx


class TestRenderBasics:
    def test_t1_verbatim(self):
        rendered = BARE.render(
            "T1", PromptContext(source_sentence="Hello", target_language="Chinese")
        )
        assert rendered.messages == (
            ("user", "Please translate the following sentence into Chinese:\nHello"),
        )

    def test_t1_prefix_contract(self):
        rendered = CATALOG.render("T1", full_context())
        assert rendered.user_content.startswith(
            "Please translate the following sentence into Chinese:"
        )

    def test_t2_contains_two_step_instruction(self):
        rendered = CATALOG.render("T2", full_context())
        assert (
            "Step 1: read this sentence. Step 2: translate this sentence."
            in rendered.user_content
        )

    def test_t5_prepends_domain(self):
        rendered = CATALOG.render("T5", full_context())
        assert rendered.user_content.startswith("Domain: Laws.\n")

    def test_t6_inlines_word_tags_and_keeps_untagged_sentence(self):
        rendered = CATALOG.render("T6", full_context())
        assert "basin(laws)" in rendered.user_content
        assert rendered.user_content.endswith("He washed his hands in a basin.")

    def test_t7_embeds_domain_in_step2(self):
        rendered = CATALOG.render("T7", full_context())
        assert (
            "Step 2: translate this sentence according to the Laws domain."
            in rendered.user_content
        )

    def test_t8_step1_discriminates_domain(self):
        rendered = CATALOG.render("T8", full_context())
        assert "Step 1: identify which domain" in rendered.user_content
        assert "Education, Laws, News, Science, Spoken" in rendered.user_content

    def test_t8_never_names_callers_domain(self):
        ctx = full_context(domain="zzz-unique-domain", domain_choices=["A", "B"])
        rendered = CATALOG.render("T8", ctx)
        assert "zzz-unique-domain" not in rendered.text()

    def test_t9_tags_each_example(self):
        rendered = CATALOG.render("T9", full_context())
        assert "Domain: Laws. Source: The power is absolute." in rendered.user_content
        assert "Domain: Science. Source: Solar power is clean." in rendered.user_content

    def test_reflection_turn1_equals_zero_shot(self):
        ctx = full_context()
        assert CATALOG.render("T4", ctx) == CATALOG.render("T1", ctx)
        assert CATALOG.render("T10", ctx) == CATALOG.render("T1", ctx)

    def test_system_message_default(self):
        rendered = CATALOG.render("T1", full_context())
        assert rendered.messages[0] == ("system", "You are a professional translator.")

    def test_missing_word_tags_error(self):
        ctx = full_context(word_domain_tags=None)
        with pytest.raises(PromptError, match="T6 requires word_domain_tags"):
            CATALOG.render("T6", ctx)

    def test_empty_word_tags_render_plain_tagged_copy(self):
        # a sentence with nothing to tag is still translatable under T6
        ctx = full_context(word_domain_tags={})
        rendered = CATALOG.render("T6", ctx)
        assert "Tagged sentence: He washed his hands in a basin ." in rendered.user_content

    def test_missing_domain_error(self):
        ctx = full_context(domain=None)
        with pytest.raises(PromptError, match="T5 requires domain"):
            CATALOG.render("T5", ctx)

    def test_missing_examples_error(self):
        ctx = full_context(few_shot_examples=None)
        with pytest.raises(PromptError, match="T3 requires few_shot_examples"):
            CATALOG.render("T3", ctx)

    def test_unknown_template(self):
        with pytest.raises(PromptError, match="unknown template"):
            CATALOG.render("T11", full_context())

    def test_render_deterministic(self):
        ctx = full_context()
        for tid in ("T1", "T3", "T6", "T8"):
            assert CATALOG.render(tid, ctx) == CATALOG.render(tid, ctx)


class TestReflectionTurns:
    def test_protocol_shape_without_system_message(self):
        ctx = full_context(prior_hypothesis="h")
        rendered = BARE.build_reflection_turns("T4", ctx)
        assert len(rendered.messages) == 3
        assert rendered.messages[1] == ("assistant", "h")
        assert rendered.messages[0] == BARE.render("T4", ctx).messages[0]
        assert rendered.messages[2][0] == "user"

    def test_default_catalog_prepends_system(self):
        ctx = full_context(prior_hypothesis="h")
        rendered = CATALOG.build_reflection_turns("T4", ctx)
        assert len(rendered.messages) == 4
        assert rendered.messages[0][0] == "system"
        assert rendered.messages[2] == ("assistant", "h")

    def test_t10_reflection_names_domain(self):
        rendered = CATALOG.build_reflection_turns("T10", full_context())
        assert "Laws" in rendered.messages[-1][1]

    def test_t4_reflection_deterministic(self):
        ctx = full_context()
        first = CATALOG.build_reflection_turns("T4", ctx)
        second = CATALOG.build_reflection_turns("T4", ctx)
        assert first.text().encode("utf-8") == second.text().encode("utf-8")

    def test_missing_prior_hypothesis(self):
        ctx = full_context(prior_hypothesis=None)
        with pytest.raises(PromptError, match="prior_hypothesis"):
            CATALOG.build_reflection_turns("T4", ctx)

    def test_non_reflection_template_rejected(self):
        with pytest.raises(PromptError):
            CATALOG.build_reflection_turns("T2", full_context())


def strip_domain_info(
    tid: str, rendered: RenderedPrompt, ctx: PromptContext
) -> RenderedPrompt:
    """Remove exactly the tag insertions a disambiguation template adds."""
    replacements = {
        "T5": [(f"Domain: {ctx.domain}.\n", "", 1)],
        "T7": [(f" according to the {ctx.domain} domain", "", 1)],
        "T9": [
            (f"Domain: {example.domain}. ", "", 1)
            for example in ctx.few_shot_examples or []
        ],
        "T10": [(f" in the {ctx.domain} domain", "", 1)],
    }[tid]
    messages = []
    for role, content in rendered.messages:
        for old, new, count in replacements:
            content = content.replace(old, new, count)
        messages.append((role, content))
    return RenderedPrompt(tuple(messages))


def random_context(rng: random.Random) -> PromptContext:
    words = ["power", "cell", "court", "energy", "basin", "system", "contagion"]
    sentence = " ".join(rng.choice(words) for _ in range(rng.randrange(3, 9))) + "."
    domains = ["Education", "Laws", "News", "Science", "Spoken"]
    examples = [
        FewShotExample(
            source=" ".join(rng.choice(words) for _ in range(3)) + ".",
            target="".join(rng.choice("权力能量法院细胞") for _ in range(4)) + "。",
            domain=rng.choice(domains),
        )
        for _ in range(rng.randrange(1, 6))
    ]
    return PromptContext(
        source_sentence=sentence,
        target_language=rng.choice(["Chinese", "English", "German"]),
        domain=rng.choice(domains),
        few_shot_examples=examples,
        prior_hypothesis="假设" + str(rng.randrange(1000)),
        domain_choices=domains,
    )


class TestStripStructuralProperty:
    def test_strip_yields_base_render_on_random_contexts(self):
        rng = random.Random(2024)
        for _ in range(100):
            ctx = random_context(rng)
            for tid, base in (("T5", "T1"), ("T7", "T2"), ("T9", "T3")):
                stripped = strip_domain_info(tid, CATALOG.render(tid, ctx), ctx)
                assert stripped == CATALOG.render(base, ctx), (tid, ctx.source_sentence)
            stripped = strip_domain_info(
                "T10", CATALOG.build_reflection_turns("T10", ctx), ctx
            )
            assert stripped == CATALOG.build_reflection_turns("T4", ctx)


class TestGolden:
    """Byte-exact renders against the files under tests/golden/."""

    def golden_payload(self) -> dict[str, str]:
        ctx = full_context()
        payload = {}
        for tid in sorted(BASE_PAIRING) + sorted(set(BASE_PAIRING.values())):
            rendered = CATALOG.render(tid, ctx)
            payload[tid] = rendered
        for tid in ("T4", "T10"):
            payload[f"{tid}.reflection"] = CATALOG.build_reflection_turns(tid, ctx)
        return payload

    def test_golden_files(self):
        payload = self.golden_payload()
        assert GOLDEN_DIR.is_dir(), "golden files not generated"
        for name, rendered in payload.items():
            path = GOLDEN_DIR / f"{name}.json"
            expected = path.read_bytes()
            actual = (
                json.dumps(
                    [list(m) for m in rendered.messages], ensure_ascii=False, indent=2
                )
                + "\n"
            ).encode("utf-8")
            assert actual == expected, f"render of {name} deviates from golden file"

    def test_catalog_checksum_stable(self):
        assert CATALOG.checksum() == PromptCatalog.load().checksum()


class TestSampleFewShot:
    class Pair:
        def __init__(self, i, domain):
            self.source_text = f"src {i}"
            self.target_text = f"tgt {i}"
            self.domain = domain

    def make_pool(self, n, domains=("laws", "science")):
        return [self.Pair(i, domains[i % len(domains)]) for i in range(n)]

    def test_clamp_with_warning(self, caplog):
        pool = self.make_pool(3)
        with caplog.at_level("WARNING"):
            examples = sample_few_shot(pool, k=5, seed=1)
        assert len(examples) == 3
        assert any("pool" in record.message for record in caplog.records)

    def test_deterministic(self):
        pool = self.make_pool(100)
        assert sample_few_shot(pool, k=5, seed=42) == sample_few_shot(pool, k=5, seed=42)

    def test_matches_oracle(self):
        pool = self.make_pool(1000)
        seed = 123
        examples = sample_few_shot(pool, k=5, seed=seed)
        indices = random.Random(seed).sample(range(len(pool)), 5)
        expected = [
            FewShotExample(pool[i].source_text, pool[i].target_text, pool[i].domain)
            for i in indices
        ]
        assert examples == expected

    def test_domain_restriction(self):
        pool = self.make_pool(50)
        examples = sample_few_shot(pool, k=5, seed=3, domain="laws")
        assert all(example.domain == "laws" for example in examples)

    def test_empty_pool_rejected(self):
        with pytest.raises(PromptError):
            sample_few_shot([], k=5, seed=0)


class TestExtractTranslation:
    def test_last_nonempty_line(self):
        assert extract_translation("thinking...\n\n你好。\n") == "你好。"

    def test_marked_answer_block_wins(self):
        reply = "Step 1: I read it.\nTranslation: 你好。\nSome trailing note"
        assert extract_translation(reply) == "你好。"

    def test_last_marker_wins(self):
        reply = "Translation: draft\nTranslation: final"
        assert extract_translation(reply) == "final"

    def test_step_scaffolding_stripped(self):
        reply = "Step 1: read the sentence.\nStep 2: 他在盆里洗手。"
        assert extract_translation(reply) == "他在盆里洗手。"

    def test_empty_reply(self):
        assert extract_translation("") == ""


def test_template_id_combinations():
    assert template_id("T7").base == "cot"
    assert template_id("T7").domain_info == "tag_in_step2"
    assert BASE_PAIRING == {
        "T5": "T1",
        "T6": "T1",
        "T7": "T2",
        "T8": "T2",
        "T9": "T3",
        "T10": "T4",
    }
