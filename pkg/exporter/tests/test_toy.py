import pytest
import torch

from imba_export.toy import ToyConvNet, ToyLossConfig, cost_sensitive_loss, train_toy


class TestLoss:
    def test_bce_matches_torch(self):
        logits = torch.tensor([0.3, -1.2, 2.0])
        labels = torch.tensor([1.0, 0.0, 1.0])
        config = ToyLossConfig("bce")
        ours = cost_sensitive_loss(logits, labels, config)
        ref = torch.nn.functional.binary_cross_entropy_with_logits(
            logits.double(), labels.double(), reduction="sum"
        )
        assert torch.allclose(ours, ref, atol=1e-9)

    def test_wbce_balanced_is_half_bce(self):
        logits = torch.tensor([0.3, -1.2])
        labels = torch.tensor([1.0, 0.0])
        config = ToyLossConfig("wbce", n_pos=5, n_neg=5)
        bce = cost_sensitive_loss(logits, labels, ToyLossConfig("bce"))
        wbce = cost_sensitive_loss(logits, labels, config)
        assert torch.allclose(wbce, 0.5 * bce, atol=1e-12)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            cost_sensitive_loss(
                torch.zeros(1), torch.zeros(1), ToyLossConfig("hinge")
            )


class TestTrainToy:
    def test_zero_epochs_keeps_initialization(self):
        torch.manual_seed(3)
        reference = ToyConvNet()
        result = train_toy(ToyLossConfig("bce"), 2.0, epochs=0, seed=3)
        for p_ref, p_got in zip(reference.parameters(), result.model.parameters()):
            assert torch.equal(p_ref, p_got)

    def test_training_reduces_loss(self):
        result = train_toy(ToyLossConfig("bce"), 2.0, epochs=3, seed=0)
        assert result.epoch_losses[-1] < result.epoch_losses[0]

    def test_invalid_ratio(self):
        with pytest.raises(ValueError):
            train_toy(ToyLossConfig("bce"), 0.5, epochs=1, seed=0)

    def test_batches_logged(self):
        result = train_toy(ToyLossConfig("focal"), 3.0, epochs=1, seed=0)
        assert result.logged_batches
        batch = result.logged_batches[0]
        assert set(batch) == {"probabilities", "labels", "loss"}
