
__PROG__ = 'OBCSim'
__AUTHOR__ = 'Inspyre Softworks'
__VERSION__ = '1.0-dev.1'
