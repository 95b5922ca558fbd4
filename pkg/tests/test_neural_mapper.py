import math

import numpy as np
import pytest
import torch
from numpy.testing import assert_allclose
from torch.autograd import gradcheck

import neural_mapper
from codebook import Codebook, CodebookConfig
from errors import ConfigurationError, DimensionError, EstimatorError, TrainingError
from neural_mapper import (Ffn, FfnSpec, LossBreakdown, TrainedMapper, TrainingConfig, TrainingLink, awgn_noise,
                           codebook_penalty, compose_loss, default_mapper_specs, mi_lower_bound,
                           model_from_metadata, ossdm_link, project_power, sofdm_link, train_end_to_end,
                           training_metadata)
from semantic_codec import CodecSpec, graph_tensor

GRADCHECK = {"eps": 1e-6, "atol": 1e-6, "rtol": 1e-4}


def small_config(**overrides):
    values = {"link": TrainingLink.OSSDM, "walsh_order": 2, "epochs": 3, "seed": 4, "lambda_": 0.0}
    values.update(overrides)
    return TrainingConfig(**values)


class TestFfn:
    def test_default_widths(self):
        tx, rx = default_mapper_specs(2)
        assert tx.layer_widths == (2, 16, 16, 4)
        assert rx.layer_widths == (4, 16, 16, 2)
        assert tx.seed != rx.seed

    @pytest.mark.parametrize("kwargs", [
        {"layer_widths": (2, 4)},
        {"layer_widths": (2, 0, 4)},
        {"layer_widths": (2, 4, 4), "activation": "gelu"},
    ])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ConfigurationError):
            FfnSpec(**kwargs)

    def test_seeded_weights(self):
        spec = FfnSpec((2, 5, 3), seed=8)
        for a, b in zip(Ffn(spec).parameters(), Ffn(spec).parameters()):
            assert torch.equal(a, b)

    def test_input_width(self):
        with pytest.raises(DimensionError):
            Ffn(FfnSpec((2, 5, 3)))(torch.zeros(4, 3, dtype=torch.float64))

    @pytest.mark.parametrize("activation", ["tanh", "sigmoid"])
    def test_gradients(self, activation):
        ffn = Ffn(FfnSpec((3, 5, 4, 2), activation=activation, seed=1))
        x = torch.randn(6, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(0)) + 0.1
        assert gradcheck(ffn, (x.requires_grad_(),), **GRADCHECK)


class TestLossPieces:
    def test_project_power(self):
        rows = torch.tensor([[3.0, 4.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]], dtype=torch.float64)
        projected = project_power(rows, 0.25)
        assert_allclose(projected.pow(2).sum(dim=-1).numpy(), [0.25, 0.25])
        assert_allclose(projected[1].numpy(), [0.5, 0.0, 0.0, 0.0])

    def test_project_power_gradient(self):
        x = torch.randn(4, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
        assert gradcheck(lambda a: project_power(a, 1 / 64), (x.requires_grad_(),), **GRADCHECK)

    def test_penalty_is_zero_on_the_codebook(self, small_codebook):
        pool = torch.as_tensor(small_codebook.block_pool())
        assert codebook_penalty(pool[:5].clone(), pool).item() == pytest.approx(0.0, abs=1e-20)
        entry = torch.as_tensor(small_codebook.entries[2])
        assert codebook_penalty(entry, small_codebook).item() == pytest.approx(0.0, abs=1e-20)

    def test_penalty_gradient(self, small_codebook):
        pool = torch.as_tensor(small_codebook.block_pool())
        x = (pool[:3] + 1e-3 * torch.randn(3, 64, dtype=torch.float64,
                                           generator=torch.Generator().manual_seed(2))).requires_grad_()
        assert gradcheck(lambda a: codebook_penalty(a, pool), (x,), **GRADCHECK)

    def test_penalty_width(self, small_codebook):
        with pytest.raises(DimensionError):
            codebook_penalty(torch.zeros(2, 32, dtype=torch.float64), small_codebook)

    def test_mi_bounded_by_log_batch(self):
        generator = torch.Generator().manual_seed(3)
        clean = torch.randn(16, 8, dtype=torch.float64, generator=generator)
        noisy = clean + 0.5 * torch.randn(16, 8, dtype=torch.float64, generator=generator)
        assert mi_lower_bound(clean, noisy).item() <= math.log(16) + 1e-12
        assert mi_lower_bound(clean, clean).item() == pytest.approx(math.log(16), abs=1e-6)

    def test_mi_is_near_zero_for_independent_pairs(self):
        generator = torch.Generator().manual_seed(9)
        clean = torch.randn(1000, 8, dtype=torch.float64, generator=generator)
        unrelated = torch.randn(1000, 8, dtype=torch.float64, generator=generator)
        assert abs(mi_lower_bound(clean, unrelated).item()) < 0.1

    def test_mi_gradient(self):
        generator = torch.Generator().manual_seed(4)
        clean = torch.randn(5, 4, dtype=torch.float64, generator=generator)
        noisy = (clean + torch.randn(5, 4, dtype=torch.float64, generator=generator)).requires_grad_()
        assert gradcheck(lambda y: mi_lower_bound(clean, y), (noisy,), **GRADCHECK)

    def test_mi_needs_a_batch(self):
        with pytest.raises(EstimatorError):
            mi_lower_bound(torch.zeros(1, 4), torch.zeros(1, 4))
        with pytest.raises(DimensionError):
            mi_lower_bound(torch.zeros(3, 4), torch.zeros(3, 5))

    def test_loss_composition(self):
        total = compose_loss(1.0, 0.5, 2.0, 0.1, 0.1, 1.0)
        assert total == pytest.approx(1.0 + 0.5 - 0.2 + 0.1)
        assert LossBreakdown(1.0, 0.5, 2.0, 0.1, total, 0.1, 1.0).is_consistent()
        assert not LossBreakdown(1.0, 0.5, 2.0, 0.1, total + 1.0, 0.1, 1.0).is_consistent()

    def test_noise_is_seeded(self):
        power = torch.tensor(1.0, dtype=torch.float64)
        assert torch.equal(awgn_noise((4, 4), power, 3.0, 11), awgn_noise((4, 4), power, 3.0, 11))
        assert not awgn_noise((4, 4), power, math.inf, 11).any()


class TestLinks:
    def test_noiseless_ossdm_link_is_mapper_composition(self):
        tx_spec, rx_spec = default_mapper_specs(3, seed=5)
        tx, rx = Ffn(tx_spec), Ffn(rx_spec)
        iq = torch.randn(6, 2, dtype=torch.float64, generator=torch.Generator().manual_seed(5))
        a_norm, estimate = ossdm_link(iq, tx, rx, math.inf, noise_seed=1)
        assert_allclose(a_norm.pow(2).sum(dim=-1).detach().numpy(), 1 / 64)
        assert_allclose(estimate.detach().numpy(), rx(a_norm).detach().numpy(), atol=1e-12)

    def test_noiseless_sofdm_link_is_identity(self):
        iq = torch.randn(300, 2, dtype=torch.float64, generator=torch.Generator().manual_seed(6))
        assert_allclose(sofdm_link(iq, math.inf, noise_seed=1).numpy(), iq.numpy(), atol=1e-12)

    def test_link_gradient_through_mappers(self):
        tx_spec, rx_spec = default_mapper_specs(1, seed=6)
        tx, rx = Ffn(tx_spec), Ffn(rx_spec)
        iq = torch.randn(4, 2, dtype=torch.float64, generator=torch.Generator().manual_seed(7)).requires_grad_()
        assert gradcheck(lambda x: ossdm_link(x, tx, rx, math.inf, noise_seed=3)[1], (iq,), **GRADCHECK)


class TestTraining:
    def test_log_decomposes_every_epoch(self, tiny_dataset):
        model = train_end_to_end(tiny_dataset, small_config())
        assert model.epochs_trained == 3
        assert len(model.training_log) == 3
        assert all(entry.is_consistent() for entry in model.training_log)

    def test_deterministic(self, tiny_dataset):
        first = train_end_to_end(tiny_dataset, small_config(epochs=2))
        second = train_end_to_end(tiny_dataset, small_config(epochs=2))
        for a, b in zip(first.state_dict().values(), second.state_dict().values()):
            assert torch.equal(a, b)

    def test_with_codebook_penalty(self, tiny_dataset, small_codebook):
        model = train_end_to_end(tiny_dataset, small_config(walsh_order=6, epochs=1, lambda_=1.0),
                                 codebook=small_codebook)
        assert model.training_log[0].codebook_penalty > 0.0
        assert model.training_log[0].is_consistent()

    def test_cross_entropy_falls_without_extra_terms(self, tiny_dataset):
        model = train_end_to_end(tiny_dataset, small_config(epochs=10, alpha=0.0, learning_rate=1e-2))
        first, last = model.training_log[0], model.training_log[-1]
        assert last.ce_concept + last.ce_relation < first.ce_concept + first.ce_relation
        assert all(entry.total == pytest.approx(entry.ce_concept + entry.ce_relation, abs=1e-10)
                   for entry in model.training_log)

    def test_penalty_pulls_outputs_to_a_single_codeword(self, tiny_dataset):
        target = np.zeros((1, 1, 4))
        target[0, 0, 0] = 1 / 8
        codebook = Codebook(target, CodebookConfig(block_len=4, num_blocks=1, num_entries=1, power_variance=0.0),
                            np.zeros(1))
        pulled = train_end_to_end(tiny_dataset, small_config(epochs=20, lambda_=100.0, learning_rate=1e-2),
                                  codebook=codebook)
        free = train_end_to_end(tiny_dataset, small_config(epochs=20, learning_rate=1e-2))

        def distance(model):
            triplets = torch.cat([graph_tensor(graph, model.codec_spec) for graph in tiny_dataset.train_graphs])
            with torch.no_grad():
                a_norm = project_power(model.tx(model.codec.encoder(triplets)), 1 / 64)
                return codebook_penalty(a_norm, codebook).item()

        assert distance(pulled) < distance(free)
        assert pulled.training_log[-1].codebook_penalty < pulled.training_log[0].codebook_penalty

    @pytest.mark.filterwarnings("error::UserWarning")
    def test_epoch_sums_raise_no_warnings(self, tiny_dataset):
        model = train_end_to_end(tiny_dataset, small_config(epochs=1))
        assert isinstance(model.training_log[0].ce_concept, float)

    def test_untrained_reference(self, tiny_dataset):
        model = train_end_to_end(tiny_dataset, small_config(epochs=0))
        fresh = TrainedMapper(CodecSpec(4, 2, seed=4), TrainingLink.OSSDM, 2, seed=4)
        assert model.training_log == []
        for a, b in zip(model.state_dict().values(), fresh.state_dict().values()):
            assert torch.equal(a, b)

    def test_sofdm_link_trains_codec_only(self, tiny_dataset):
        model = train_end_to_end(tiny_dataset, small_config(link=TrainingLink.SOFDM, epochs=1))
        assert model.tx is None and model.rx is None
        assert model.training_log[0].codebook_penalty == 0.0

    def test_penalty_needs_matching_codebook(self, tiny_dataset, small_codebook):
        with pytest.raises(ConfigurationError):
            train_end_to_end(tiny_dataset, small_config(lambda_=1.0))
        with pytest.raises(ConfigurationError):
            train_end_to_end(tiny_dataset, small_config(lambda_=1.0), codebook=small_codebook)

    def test_nan_loss_raises_with_epoch(self, tiny_dataset, monkeypatch):
        def broken(model, triplets, train_config, pool, noise_seed):
            nan = torch.tensor(float("nan"), dtype=torch.float64, requires_grad=True)
            return nan, {}

        monkeypatch.setattr(neural_mapper, "batch_loss", broken)
        with pytest.raises(TrainingError) as excinfo:
            train_end_to_end(tiny_dataset, small_config())
        assert excinfo.value.epoch == 0

    def test_metadata_rebuilds_the_architecture(self, tiny_dataset):
        model = train_end_to_end(tiny_dataset, small_config(epochs=1))
        rebuilt = model_from_metadata(training_metadata(model))
        assert rebuilt.walsh_order == 2
        assert rebuilt.tx.spec == model.tx.spec
        assert rebuilt.training_log == model.training_log
        assert [k for k in rebuilt.state_dict()] == [k for k in model.state_dict()]

    def test_mapper_interface(self, tiny_dataset):
        model = train_end_to_end(tiny_dataset, small_config(epochs=0))
        coefficients = model.to_coefficients(np.zeros((5, 2)))
        assert coefficients.shape == (5, 4)
        assert model.to_symbols(coefficients).shape == (5, 2)

    def test_wrong_mapper_widths(self):
        with pytest.raises(ConfigurationError):
            TrainedMapper(CodecSpec(4, 2), TrainingLink.OSSDM, 2, tx_spec=FfnSpec((2, 8, 8)))
