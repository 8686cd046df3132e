from django.shortcuts import get_object_or_404
from django.views.generic import TemplateView, ListView
from django_tables2.views import SingleTableMixin
from django_filters.views import FilterView
from .filters import SweepRunFilter
from .models import SweepRun
from .tables import SweepRunTable, RESULT_TABLES


class HomeView(TemplateView):
    template_name = 'sidelink/index.html'
    extra_context = {'title': 'Sidelink lab'}

    def get_context_data(self, **kwargs):
        context = super().get_context_data(**kwargs)
        context['latest'] = SweepRun.objects.all()[:5]
        return context


class RunListView(SingleTableMixin, FilterView):
    table_class = SweepRunTable
    filterset_class = SweepRunFilter
    template_name = 'sidelink/run_list.html'
    paginate_by = 25
    extra_context = {'title': 'Experiment runs'}

    def get_queryset(self, **kwargs):
        return SweepRun.objects.all()


class RunDetailView(SingleTableMixin, ListView):
    template_name = 'sidelink/run_detail.html'

    def dispatch(self, *args, **kwargs):
        self.run = get_object_or_404(SweepRun, pk=self.kwargs['pk'])
        return super().dispatch(*args, **kwargs)

    def get_table_class(self):
        return RESULT_TABLES[self.run.kind]

    def get_queryset(self, **kwargs):
        return self.run.results()

    def get_context_data(self, **kwargs):
        context = super().get_context_data(**kwargs)
        context['title'] = str(self.run)
        context['run'] = self.run
        context['config'] = sorted(self.run.manifest.get('config', {}).items())
        return context
