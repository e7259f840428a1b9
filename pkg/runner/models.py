from django.db import models


class SimulationRun(models.Model):
    scenario = models.CharField("Сценарий", max_length=120)
    controller = models.CharField("Регулятор", max_length=8)
    capacity = models.FloatField("Ёмкость регулирования")
    seed = models.BigIntegerField("Зерно")
    config_hash = models.CharField(
        "Хеш конфигурации",
        max_length=64,
        db_index=True,
        help_text="sha256 файла параметров, сценария и зерна",
    )
    status = models.CharField("Статус", max_length=16, default="ok")
    error = models.TextField("Ошибка", blank=True, default="")

    e_p = models.FloatField("E_p", null=True, blank=True)
    e_t = models.FloatField("E_t", null=True, blank=True)
    e_e = models.FloatField("E_e", null=True, blank=True)
    e_glb = models.FloatField("E_glb", null=True, blank=True)
    mean_iterations = models.FloatField("Среднее число итераций", null=True, blank=True)

    out_dir = models.CharField("Каталог результатов", max_length=500, blank=True, default="")
    created_at = models.DateTimeField("Создан", auto_now_add=True)

    class Meta:
        verbose_name = "Прогон"
        verbose_name_plural = "Прогоны"
        ordering = ("-created_at", "-id")

    def __str__(self):
        return f"{self.scenario}/{self.controller} ξ={self.capacity:g} ({self.status})"
