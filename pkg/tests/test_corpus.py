import json

import numpy as np
import pytest

from anchorparse.corpus import Example, load_corpus, make_batch
from anchorparse.errors import ContractError, CorpusError
from anchorparse.logical_form import SPECIAL_TOKENS
from anchorparse.vocab import BOS_ID, EOS_ID, MASK_ID, PAD_ID, SEP_ID, UNK_ID, Vocabulary


class TestVocabulary:
    def test_specials_first_then_sorted(self):
        vocab = Vocabulary.build([["b", "a"], ["c", "a", "<SEP>"]])
        assert vocab.tokens == list(SPECIAL_TOKENS) + ["a", "b", "c"]
        assert (PAD_ID, BOS_ID, EOS_ID, SEP_ID, MASK_ID, UNK_ID) == tuple(range(6))

    def test_unknown_maps_to_unk(self):
        vocab = Vocabulary.build([["a"]])
        assert vocab.encode(["a", "zzz"]) == [6, UNK_ID]

    def test_decode_stops_at_eos_and_skips_padding(self):
        vocab = Vocabulary.build([["a", "b"]])
        assert vocab.decode([BOS_ID, 6, 7, EOS_ID, 6, PAD_ID]) == ["a", "b"]

    def test_rejects_bad_prefix(self):
        with pytest.raises(ContractError):
            Vocabulary(["a"] + list(SPECIAL_TOKENS))


class TestCorpusFiles:
    def test_round_trip(self, corpus_dir, tiny_corpus):
        loaded = load_corpus(corpus_dir)
        assert [e.to_record() for e in loaded.all_examples()] == [e.to_record() for e in tiny_corpus.all_examples()]
        assert set(loaded.schemas) == set(tiny_corpus.schemas)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path / "nowhere")

    def test_inconsistent_record_is_rejected(self, tmp_path, tiny_corpus):
        from anchorparse.corpus import write_corpus

        write_corpus(tiny_corpus, tmp_path)
        lines = (tmp_path / "train.jsonl").read_text().splitlines()
        record = json.loads(lines[0])
        record["saa_mask"] = [not m for m in record["saa_mask"]]
        lines[0] = json.dumps(record)
        (tmp_path / "train.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(CorpusError):
            load_corpus(tmp_path)

    def test_record_missing_field(self):
        with pytest.raises(CorpusError):
            Example.from_record({"id": 1})


class TestBatching:
    def test_layout(self, tiny_corpus, vocab):
        examples = tiny_corpus.split("train")[:4]
        batch = make_batch(examples, vocab)
        assert len(batch) == 4
        for row, example in enumerate(examples):
            main = vocab.encode(example.targets.main)
            n = len(main)
            assert batch.decoder_input[row, 0] == BOS_ID
            assert list(batch.decoder_input[row, 1 : n + 1]) == main
            assert list(batch.main_target[row, : n + 1]) == main + [EOS_ID]
            assert not batch.main_ignore[row, : n + 1].any()
            assert batch.main_ignore[row, n + 1 :].all()
            keep = ~batch.saa_ignore[row, :n]
            assert list(keep) == example.targets.saa_mask
            assert batch.saa_ignore[row, n]
            sae = vocab.encode(example.targets.sae) + [EOS_ID]
            assert list(batch.sae_target[row, : len(sae)]) == sae
            assert not batch.sae_ignore[row, : len(sae)].any()
            assert batch.sae_ignore[row, len(sae) :].all()
            src = vocab.encode(example.utterance)
            assert list(batch.source[row, : len(src)]) == src
            assert (batch.source[row, len(src) :] == PAD_ID).all()

    def test_empty_batch(self, vocab):
        with pytest.raises(ContractError):
            make_batch([], vocab)

    def test_length_limits(self, tiny_corpus, vocab):
        with pytest.raises(ContractError):
            make_batch(tiny_corpus.split("train")[:2], vocab, max_target_len=2)

    def test_ignore_masks_are_boolean(self, tiny_corpus, vocab):
        batch = make_batch(tiny_corpus.split("dev"), vocab)
        for mask in (batch.main_ignore, batch.sae_ignore, batch.saa_ignore):
            assert mask.dtype == np.bool_
