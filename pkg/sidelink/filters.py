from django_filters import FilterSet, ChoiceFilter, CharFilter
from .models import SweepRun


class SweepRunFilter(FilterSet):
    kind = ChoiceFilter(choices=SweepRun.KIND_CHOICES, empty_label='Kind')
    scenario = CharFilter(lookup_expr='icontains')

    class Meta:
        model = SweepRun
        fields = ['kind', 'scenario', 'master_seed']
