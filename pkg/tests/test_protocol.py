"""Wire codec, sync state, and project configuration."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedmask.errors import EncodingError, InvalidConfig, ValueOutOfField
from fedmask.masking import DEFAULT_PRIME, GaussianSpec, PrimeModulus
from fedmask.protocol import (
    DType,
    ParameterValue,
    ProjectConfig,
    SyncCheck,
    SyncState,
    canonical_json_bytes,
    check_sync,
    decode_flags,
    decode_parameter,
    decode_parameter_map,
    encode_flags,
    encode_parameter,
    encode_parameter_map,
    parse_json_bytes,
)


class TestParameterValue:
    def test_integer_coercion_and_bounds(self):
        v = ParameterValue.non_negative_integer(5)
        assert v.dtype is DType.NON_NEGATIVE_INTEGER and v.value == 5
        with pytest.raises(ValueOutOfField):
            ParameterValue.non_negative_integer(-1)

    def test_float_must_be_finite(self):
        with pytest.raises(EncodingError):
            ParameterValue.float_scalar(float("nan"))
        with pytest.raises(EncodingError):
            ParameterValue.float_array([1.0, float("inf")])

    def test_equality_is_bit_exact(self):
        assert ParameterValue.float_scalar(0.0) != ParameterValue.float_scalar(-0.0)
        assert ParameterValue.float_scalar(1.5) == ParameterValue.float_scalar(1.5)
        a = ParameterValue.float_array([[1.0, 2.0]])
        b = ParameterValue.float_array([1.0, 2.0])
        assert a != b  # same bytes, different shape

    def test_arrays_are_frozen(self):
        v = ParameterValue.float_array([1.0, 2.0])
        with pytest.raises(ValueError):
            v.value[0] = 9.0

    def test_not_hashable(self):
        with pytest.raises(TypeError):
            hash(ParameterValue.float_scalar(1.0))


class TestCodec:
    def test_integer_travels_as_decimal_string(self):
        wire = encode_parameter(ParameterValue.non_negative_integer(2**54 - 34))
        assert wire == {"t": "nni", "v": "18014398509481950"}
        assert decode_parameter(wire).value == 2**54 - 34

    def test_integer_above_float_precision_survives(self):
        # 2**53 + 1 is the first integer a binary64 JSON number would corrupt.
        v = ParameterValue.non_negative_integer(2**53 + 1)
        assert decode_parameter(encode_parameter(v)).value == 2**53 + 1

    def test_integer_rejects_json_numbers(self):
        with pytest.raises(EncodingError):
            decode_parameter({"t": "nni", "v": 5})

    def test_float_scalar_roundtrip(self):
        for x in (0.0, -0.0, 1.5, -2.25, 1e-308, 1.7976931348623157e308, 0.1):
            v = ParameterValue.float_scalar(x)
            assert decode_parameter(encode_parameter(v)) == v

    def test_float_rejects_booleans_and_strings(self):
        with pytest.raises(EncodingError):
            decode_parameter({"t": "flt", "v": True})
        with pytest.raises(EncodingError):
            decode_parameter({"t": "flt", "v": "1.5"})

    def test_array_roundtrip_preserves_shape_and_bits(self):
        arr = np.array([[0.1, -0.0], [5e-324, 3.14]])
        v = ParameterValue.float_array(arr)
        out = decode_parameter(encode_parameter(v))
        assert out == v
        assert out.value.shape == (2, 2)

    def test_empty_array_roundtrip(self):
        v = ParameterValue.float_array(np.zeros((0,)))
        out = decode_parameter(encode_parameter(v))
        assert out.value.shape == (0,)

    def test_array_payload_length_checked(self):
        wire = encode_parameter(ParameterValue.float_array([1.0, 2.0]))
        wire["shape"] = [3]
        with pytest.raises(EncodingError):
            decode_parameter(wire)

    def test_array_bad_base64_rejected(self):
        with pytest.raises(EncodingError):
            decode_parameter({"t": "arr", "shape": [1], "data": "@@@"})

    def test_unknown_tag_rejected(self):
        with pytest.raises(EncodingError):
            decode_parameter({"t": "str", "v": "x"})
        with pytest.raises(EncodingError):
            decode_parameter(["not", "an", "object"])

    def test_map_keys_lexicographic(self):
        params = {
            "zeta": ParameterValue.float_scalar(1.0),
            "alpha": ParameterValue.non_negative_integer(2),
        }
        wire = encode_parameter_map(params)
        assert list(wire) == ["alpha", "zeta"]
        back = decode_parameter_map(wire)
        assert list(back) == ["alpha", "zeta"]
        assert back["alpha"] == params["alpha"]

    def test_flags_roundtrip(self):
        flags = {"b": DType.FLOAT_ARRAY, "a": DType.NON_NEGATIVE_INTEGER}
        wire = encode_flags(flags)
        assert wire == {"a": "nni", "b": "arr"}
        assert decode_flags(wire) == {
            "a": DType.NON_NEGATIVE_INTEGER,
            "b": DType.FLOAT_ARRAY,
        }
        with pytest.raises(EncodingError):
            decode_flags({"a": "str"})
        with pytest.raises(EncodingError):
            decode_flags("nope")

    @given(st.integers(min_value=0, max_value=DEFAULT_PRIME - 1))
    @settings(max_examples=200, deadline=None)
    def test_integer_roundtrip_property(self, n):
        v = ParameterValue.non_negative_integer(n)
        assert decode_parameter(encode_parameter(v)).value == n

    @given(st.floats(allow_nan=False, allow_infinity=False))
    @settings(max_examples=200, deadline=None)
    def test_float_roundtrip_property(self, x):
        v = ParameterValue.float_scalar(x)
        assert decode_parameter(encode_parameter(v)) == v

    @given(
        st.lists(
            st.floats(allow_nan=False, allow_infinity=False),
            min_size=0,
            max_size=32,
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_array_roundtrip_property(self, xs):
        v = ParameterValue.float_array(np.array(xs, dtype=np.float64))
        assert decode_parameter(encode_parameter(v)) == v


class TestCanonicalJson:
    def test_sorted_keys_no_whitespace(self):
        data = canonical_json_bytes({"b": 1, "a": {"z": 2, "y": 3}})
        assert data == b'{"a":{"y":3,"z":2},"b":1}'

    def test_same_object_same_bytes(self):
        obj = {"x": [1, 2.5, "s"], "k": {"n": None}}
        assert canonical_json_bytes(obj) == canonical_json_bytes(dict(obj))

    def test_nan_rejected(self):
        with pytest.raises(EncodingError):
            canonical_json_bytes({"x": float("nan")})

    def test_parse_rejects_bad_bytes(self):
        with pytest.raises(EncodingError):
            parse_json_bytes(b"{not json")
        with pytest.raises(EncodingError):
            parse_json_bytes(b"\xff\xfe")

    def test_parse_inverts_encode(self):
        obj = {"a": [1, 2], "b": "text"}
        assert parse_json_bytes(canonical_json_bytes(obj)) == obj


class TestSyncState:
    def test_wire_roundtrip(self):
        s = SyncState("Sum", 2)
        assert SyncState.from_wire(s.to_wire()) == s

    def test_validation(self):
        with pytest.raises(EncodingError):
            SyncState("", 0)
        with pytest.raises(EncodingError):
            SyncState("Sum", -1)
        with pytest.raises(EncodingError):
            SyncState.from_wire({"step": "Sum"})

    def test_check_sync_reports_offenders_sorted(self):
        expected = SyncState("Sum", 1)
        reports = [
            ("zed", SyncState("Sum", 0)),
            ("amy", SyncState("Init", 1)),
            ("bob", SyncState("Sum", 1)),
        ]
        result = check_sync(reports, expected)
        assert result == SyncCheck(ok=False, mismatched=("amy", "zed"))
        assert check_sync([("bob", expected)], expected).ok

    def test_check_sync_requires_reports(self):
        with pytest.raises(ValueError):
            check_sync([], SyncState("Sum", 1))


class TestProjectConfig:
    def _config(self, **kwargs):
        defaults = dict(
            id="p1",
            name="n",
            description="d",
            tool="stats",
            algorithm="variance",
            hyperparameters={},
            participant_count=3,
            modulus=PrimeModulus(DEFAULT_PRIME),
            noise_variance=GaussianSpec(1e12),
        )
        defaults.update(kwargs)
        return ProjectConfig(**defaults)

    def test_wire_roundtrip(self):
        config = self._config(
            hyperparameters={"alpha": ParameterValue.float_scalar(0.5)}
        )
        back = ProjectConfig.from_wire(config.to_wire())
        assert back == config
        # the modulus rides as a decimal string to survive JSON
        assert config.to_wire()["modulus"] == str(DEFAULT_PRIME)

    def test_fewer_than_three_participants_rejected(self):
        with pytest.raises(InvalidConfig):
            self._config(participant_count=2)

    def test_modulus_client_bound_enforced(self):
        with pytest.raises(InvalidConfig):
            self._config(participant_count=1024)

    def test_malformed_wire_rejected(self):
        with pytest.raises(EncodingError):
            ProjectConfig.from_wire({"id": "x"})
