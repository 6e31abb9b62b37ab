import logging
from collections import OrderedDict
from collections.abc import Iterable, Mapping
from contextlib import contextmanager
from numbers import Integral, Real
from timeit import default_timer as timer
from warnings import warn

logger = logging.getLogger('chronolens')


class sdictm(object):
    """
    A dictionary which allows accessing it's values using a dot notation. i.e. `d['a']` can be accessed as `d.a`
    Mutable version. Nested dictionaries (also inside lists) are converted recursively, so that a normalized
    scenario reads as `config.wave.scan.angles`.
    """
    _INSTANCE_VAR_LIST = ['_data']

    def __init__(self, obj):
        self._data = OrderedDict()
        if not isinstance(obj, Mapping):
            raise RuntimeError("should be initialized with a dictionary only")
        for key, val in obj.items():
            self._data[key] = self._wrap(val)

    @classmethod
    def _wrap(cls, val):
        if isinstance(val, sdictm):
            return cls(val.todict())
        if isinstance(val, Mapping):
            return cls(val)
        if isinstance(val, list):
            return [cls._wrap(v) for v in val]
        return val

    def __repr__(self):
        return self._data.__repr__()

    def __getattr__(self, attr):
        if attr.startswith('__') or attr in self._INSTANCE_VAR_LIST:
            return object.__getattribute__(self, attr)
        ret = self._data.get(attr)
        if ret is None and attr not in self._data:
            warn("Returning None value for {}".format(attr), stacklevel=2)
        return ret

    def __getitem__(self, key):
        return self.__getattr__(key)

    def __setitem__(self, key, value):
        self.__setattr__(key, value)

    def __setattr__(self, attr, value):
        if attr in self._INSTANCE_VAR_LIST:
            object.__setattr__(self, attr, value)
        else:
            self._data[attr] = value

    def __contains__(self, key):
        return key in self._data

    def __iter__(self):
        return iter(self._data)

    def __getstate__(self):
        return self.todict()

    def __setstate__(self, state):
        object.__setattr__(self, '_data', OrderedDict((k, self._wrap(v)) for k, v in state.items()))

    def get(self, key, default_value=None):
        value = self._data.get(key)
        if value is None:
            return default_value
        return value

    def keys(self):
        return self._data.keys()

    def items(self):
        return self._data.items()

    def todict(self):
        """
        :return: plain nested :class:`~collections.OrderedDict` and list structure, ready for `json.dumps`
        """
        return OrderedDict((key, _unwrap(value)) for key, value in self._data.items())


def _unwrap(value):
    if isinstance(value, sdictm):
        return value.todict()
    if isinstance(value, list):
        return [_unwrap(v) for v in value]
    return value


class sdict(sdictm):
    """
    Immutable version of :class:`~chronolens.sdictm`, the type of every normalized scenario
    """

    def __setattr__(self, attr, value):
        if attr in self._INSTANCE_VAR_LIST:
            object.__setattr__(self, attr, value)
        else:
            raise RuntimeError("Immutable dictionary")


def get_grouped_dict(dict_iter):
    """
    Turns rows into columns: an iterable of dicts with equal keys becomes one dict of lists, e.g. the target entries
    of a reconstruction report become `{'target_id': [...], 'residuals': [...], ...}`.

    :returns: `grouped[key][i] == rows[i][key]`, an empty dict for no rows
    """
    rows = tuple(dict_iter)
    grouped = OrderedDict()
    if rows:
        for key in rows[0].keys():
            grouped[key] = [row[key] for row in rows]
    return grouped


def convert_dict_to_numpy(input_dict):
    """
    Converts the values of a dict read from JSON to numpy types, recursively: numbers to `np.int64` and
    `np.float64`, lists to float arrays. Strings, booleans and None are kept.
    """
    import numpy as np

    output_dict = {}
    for key, value in input_dict.items():
        if isinstance(value, Mapping):
            new_value = convert_dict_to_numpy(value)
        elif isinstance(value, Iterable) and not isinstance(value, str):
            new_value = np.array(value, dtype=float)
        elif isinstance(value, Integral) and not isinstance(value, bool):
            new_value = np.int64(value)
        elif isinstance(value, Real) and not isinstance(value, bool):
            new_value = np.float64(value)
        else:
            new_value = value
        output_dict[key] = new_value

    return output_dict


@contextmanager
def timed(logger, section_name='Run'):
    start = timer()
    yield
    end = timer()
    logger.info("%s took %.3f seconds", section_name, end - start)
