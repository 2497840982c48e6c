from django import template

register = template.Library()


@register.filter
def split(value, delimiter):
    if not value:
        return []
    return value.split(delimiter)


@register.filter
def plus_minus(mean, std):
    """``mean ± std`` with two decimals; '-' when the cell has no value."""
    if mean in (None, ''):
        return '-'
    if std in (None, ''):
        return f"{float(mean):.2f}"
    return f"{float(mean):.2f} ± {float(std):.2f}"


@register.filter
def percent(value):
    if value in (None, ''):
        return '-'
    return f"{float(value) * 100:+.1f}%"
