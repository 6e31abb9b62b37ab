import os
import re


class Paths:
    def __init__(self, root_dir_name, root_dir_path='./results', suffix=""):
        """
        Manages generating paths for the outputs of one scenario run

        :param root_dir_name: Root dir name where all the subdirectories are created, usually the scenario name
        :param root_dir_path: The root dir path where the root dir is created. It must exist.
        :param suffix: Suffix used for various output files
        """
        if not os.path.exists(root_dir_path):
            raise RuntimeError("{} does not exist. Please create it.".format(root_dir_path))
        self._root_dir_name = make_safe_name(root_dir_name)
        self._root_dir_path = root_dir_path
        self._suffix = suffix

    @property
    def root_dir_path(self):
        """
        Get the full path of the scenario directory, created on first access
        """
        path = os.path.join(self._root_dir_path, self._root_dir_name)
        os.makedirs(path, exist_ok=True)
        return path

    def _subdir(self, name):
        path = os.path.join(self.root_dir_path, name)
        os.makedirs(path, exist_ok=True)
        return path

    @property
    def datasets_path(self):
        """
        /root_dir_path/root_dir_name/datasets
        """
        return self._subdir("datasets")

    @property
    def reports_path(self):
        return self._subdir("reports")

    @property
    def waves_path(self):
        return self._subdir("waves")

    @property
    def plots_path(self):
        return self._subdir("plots")

    @property
    def logs_path(self):
        return self._subdir("logs")

    def get_fpath(self, kind, name, ext):
        """
        Get the path of an output file of the form /root_dir_path/root_dir_name/{kind}/{name}{suffix}.{ext}

        :param kind: one of 'datasets', 'reports', 'waves', 'plots', 'logs'
        """
        directory = getattr(self, "{}_path".format(kind))
        return os.path.join(directory, "{}{}.{}".format(name, self._suffix, ext))


def make_safe_name(name):
    """
    Replace everything that is not safe in a directory name by '-'
    """
    return re.sub(r"[^A-Za-z0-9_.+-]", "-", str(name)).strip('-') or 'run'
